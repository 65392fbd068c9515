// densesteer command-line entry point. Exit codes: 0 success, 1 domain error,
// 2 usage error (nothing written).

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "densesteer/answer.hpp"
#include "densesteer/dataset.hpp"
#include "densesteer/errors.hpp"
#include "densesteer/eval.hpp"
#include "densesteer/io.hpp"
#include "densesteer/pairgen.hpp"
#include "densesteer/records.hpp"
#include "densesteer/scoring.hpp"
#include "densesteer/steering.hpp"
#include "densesteer/trace.hpp"
#include "densesteer/weights_io.hpp"
#include "run_manifest.hpp"

namespace fs = std::filesystem;
using namespace densesteer;
using densesteer::cli::RunManifest;
using densesteer::cli::version_string;

namespace {

// Bad flag combinations found after parsing. Raised before any work starts.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void log_line(const std::string& msg) { std::fprintf(stderr, "densesteer: %s\n", msg.c_str()); }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<std::string> kFormats = {"gsm8k-jsonl", "plain-jsonl"};
const std::vector<std::string> kStyles = {"cot", "dense"};
const std::vector<std::string> kPolicies = {"generated-only", "all-positions"};
const std::vector<std::string> kRewriters = {"rule-based", "external", "random-compression"};

// Environment fallbacks, applied only when the flag is absent from the
// command line. They are injected as arguments so they outrank the config
// file, which CLI11 consults only for options still unset.
struct EnvFlag {
  const char* flag;
  const char* env;
  bool is_switch;
};
constexpr EnvFlag kEnvFlags[] = {
    {"--workers", "DENSESTEER_WORKERS", false},
    {"--backend", "DENSESTEER_BACKEND", false},
    {"--max-new-tokens", "DENSESTEER_MAX_NEW_TOKENS", false},
    {"--base-url", "DENSESTEER_REWRITER_BASE_URL", false},
    {"--rewriter-model", "DENSESTEER_REWRITER_MODEL", false},
    {"--cache-dir", "DENSESTEER_REWRITE_CACHE", false},
    {"--offline", "DENSESTEER_OFFLINE", true},
};

bool truthy(std::string_view v) { return v == "1" || v == "true" || v == "yes" || v == "on"; }

std::vector<std::string> with_env_fallbacks(const CLI::App& app, std::vector<std::string> args) {
  const CLI::App* sub = nullptr;
  for (const std::string& a : args) {
    for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; })) {
      if (s->get_name() == a) sub = s;
    }
    if (sub != nullptr) break;
  }
  if (sub == nullptr) return args;
  for (const EnvFlag& e : kEnvFlags) {
    const char* value = std::getenv(e.env);
    if (value == nullptr || sub->get_option_no_throw(e.flag) == nullptr) continue;
    const std::string flag = e.flag;
    bool given = false;
    for (const std::string& a : args) given |= a == flag || a.rfind(flag + "=", 0) == 0;
    if (given) continue;
    if (e.is_switch) {
      if (truthy(value)) args.push_back(flag);
    } else {
      args.push_back(flag + "=" + value);
    }
  }
  return args;
}

struct Common {
  std::string backend = "micro";
  int workers = 1;
};

void add_common(CLI::App* cmd, Common& c, bool uses_model) {
  cmd->add_option("--workers", c.workers, "Worker threads")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  if (uses_model) {
    cmd->add_option("--backend", c.backend, "Model backend")
        ->capture_default_str()
        ->check(CLI::IsMember({"micro"}));
  }
}

std::unique_ptr<LanguageModel> load_model(RunManifest& run, const fs::path& weights) {
  run.add_input(weights);
  return std::make_unique<MicroModel>(load_weights(weights));
}

std::vector<EvalItem> load_items(RunManifest& run, const fs::path& path, const std::string& fmt) {
  run.add_input(path);
  return ingest_dataset(path, parse_dataset_format(fmt));
}

std::string audit_csv(std::span<const ContrastivePair> pairs, std::span<const AuditReport> audits) {
  std::string out =
      "question_id,steps_neg,steps_pos,density_neg,density_pos,edit_similarity,"
      "adjacent_merge_ratio,answer_preserved,markers_preserved\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const AuditReport& a = audits[i];
    out += pairs[i].question_id + "," + fmt_double(a.steps_neg) + "," + fmt_double(a.steps_pos) +
           "," + fmt_double(a.density_neg) + "," + fmt_double(a.density_pos) + "," +
           fmt_double(a.edit_similarity) + "," + fmt_double(a.adjacent_merge_ratio) + "," +
           (a.answer_preserved ? "true" : "false") + "," +
           (a.markers_preserved ? "true" : "false") + "\n";
  }
  return out;
}

void log_audit_summary(std::span<const AuditReport> audits) {
  const AuditSummary s = summarize_audits(audits);
  log_line("audit: " + std::to_string(s.n_pairs) + " pairs, steps " +
           fmt_double(s.mean.steps_neg) + " -> " + fmt_double(s.mean.steps_pos) +
           ", edit similarity " + fmt_double(s.mean.edit_similarity) + ", merge ratio " +
           fmt_double(s.mean.adjacent_merge_ratio) + ", answers preserved " +
           fmt_double(s.answer_preserved_rate));
}

using Runner = std::function<int(RunManifest&)>;

struct Command {
  CLI::App* app;
  Runner run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense-reasoning steering vectors on a bundled micro transformer"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version_string());
  std::string config_file;
  app.set_config("--config", "", "Config file (TOML/INI); flags and environment take precedence");

  Common common;
  std::vector<Command> commands;

  // init-model
  {
    auto* cmd = app.add_subcommand("init-model", "Write deterministic micro-model weights");
    add_common(cmd, common, true);
    auto cfg = std::make_shared<ModelConfig>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--out", *out, "Weight file")->required();
    cmd->add_option("--seed", cfg->seed)->capture_default_str();
    cmd->add_option("--n-layers", cfg->n_layers)->capture_default_str();
    cmd->add_option("--d-model", cfg->d_model)->capture_default_str();
    cmd->add_option("--n-heads", cfg->n_heads)->capture_default_str();
    cmd->add_option("--d-ff", cfg->d_ff)->capture_default_str();
    cmd->add_option("--max-seq-len", cfg->max_seq_len)->capture_default_str();
    commands.push_back({cmd, [cfg, out](RunManifest& run) {
                          const MicroModel model = init_micro_model(*cfg);
                          run.write_output(*out, serialize_weights(model.weights()));
                          log_line("fingerprint " + model.fingerprint());
                          return 0;
                        }});
  }

  // generate
  {
    auto* cmd = app.add_subcommand("generate", "Greedy chain-of-thought traces for a dataset");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, dataset, format = "gsm8k-jsonl", style = "cot", out;
      std::size_t max_new = 2048, samples = 1;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--dataset", o->dataset)->required();
    cmd->add_option("--format", o->format)->capture_default_str()->check(CLI::IsMember(kFormats));
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_option("--max-new-tokens", o->max_new)->capture_default_str();
    cmd->add_option("--samples-per-question", o->samples)->capture_default_str();
    cmd->add_option("--out", o->out, "Trace JSONL")->required();
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          const auto model = load_model(run, o->weights);
                          const auto items = load_items(run, o->dataset, o->format);
                          if (items.empty()) log_line("warning: dataset has no questions");
                          GenerationOptions g;
                          g.max_new_tokens = o->max_new;
                          g.samples_per_question = o->samples;
                          g.style = prompts::parse_style(o->style);
                          g.workers = common.workers;
                          const NegativeSet set = generate_negatives(*model, items, g);
                          for (const GenerationFailure& f : set.failures) {
                            log_line("question " + f.question_id + " failed: " + f.reason);
                          }
                          run.write_output(o->out, traces_to_jsonl(set.traces));
                          return 0;
                        }});
  }

  // build-pairs
  {
    auto* cmd = app.add_subcommand("build-pairs", "Contrastive dense/sparse pairs");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, dataset, format = "gsm8k-jsonl", style = "cot", out, audit_csv;
      std::string rewriter = "rule-based";
      std::size_t n_pairs = 50, max_new = 2048;
      RewriterConfig rc;
      std::optional<std::uint64_t> merge_seed;
      std::string cache_dir = "rewrite-cache";
      bool drop_wrong = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--dataset", o->dataset)->required();
    cmd->add_option("--format", o->format)->capture_default_str()->check(CLI::IsMember(kFormats));
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_option("--max-new-tokens", o->max_new)->capture_default_str();
    cmd->add_option("--rewriter", o->rewriter)
        ->capture_default_str()
        ->check(CLI::IsMember(kRewriters));
    cmd->add_option("--n-pairs", o->n_pairs)->capture_default_str();
    cmd->add_option("--max-merges", o->rc.max_merges_per_trace)->capture_default_str();
    cmd->add_option("--short-step-threshold", o->rc.short_step_threshold)->capture_default_str();
    cmd->add_option("--merge-seed", o->merge_seed, "Required for random-compression");
    cmd->add_option("--base-url", o->rc.external.base_url, "External rewriter base URL");
    cmd->add_option("--rewriter-model", o->rc.external.model, "External rewriter model name");
    cmd->add_option("--credential-env", o->rc.external.credential_env)->capture_default_str();
    cmd->add_option("--cache-dir", o->cache_dir)->capture_default_str();
    cmd->add_flag("--offline", o->rc.external.offline, "Serve rewrites from the cache only");
    cmd->add_option("--max-concurrency", o->rc.external.max_concurrency)->capture_default_str();
    cmd->add_option("--max-retries", o->rc.external.max_retries)->capture_default_str();
    cmd->add_flag("--drop-wrong-negatives", o->drop_wrong);
    cmd->add_option("--out", o->out, "Pair JSONL")->required();
    cmd->add_option("--audit-csv", o->audit_csv, "Per-pair audit CSV");
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          o->rc.mode = parse_rewriter_mode(o->rewriter);
                          o->rc.merge_seed = o->merge_seed;
                          o->rc.external.cache_dir = o->cache_dir;
                          try {
                            o->rc.validate();
                          } catch (const ConfigError& e) {
                            throw UsageError(e.what());
                          }
                          const auto model = load_model(run, o->weights);
                          auto items = load_items(run, o->dataset, o->format);
                          std::unique_ptr<ChatCompletionsClient> client;
                          BuildPairsOptions b;
                          if (o->rc.mode == RewriterMode::kExternal) {
                            client = std::make_unique<ChatCompletionsClient>(o->rc.external);
                            b.client = client.get();
                          }
                          b.generation.max_new_tokens = o->max_new;
                          b.generation.style = prompts::parse_style(o->style);
                          b.generation.workers = common.workers;
                          b.drop_wrong_negatives = o->drop_wrong;
                          const PairSet set =
                              build_pairs(*model, std::move(items), o->rc, o->n_pairs, b);
                          for (const PairExclusion& e : set.exclusions) {
                            log_line("excluded " + e.question_id + ": " + e.reason);
                          }
                          if (client) {
                            log_line("rewriter network calls: " +
                                     std::to_string(client->network_calls()));
                          }
                          log_audit_summary(set.audits);
                          run.write_output(o->out, pairs_to_jsonl(set.pairs));
                          if (!o->audit_csv.empty()) {
                            run.write_output(o->audit_csv, audit_csv(set.pairs, set.audits));
                          }
                          return 0;
                        }});
  }

  // audit-pairs
  {
    auto* cmd = app.add_subcommand("audit-pairs", "Mechanical rewrite audit of a pair file");
    add_common(cmd, common, false);
    auto pairs = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--pairs", *pairs)->required();
    cmd->add_option("--out", *out, "Audit CSV")->required();
    commands.push_back({cmd, [pairs, out](RunManifest& run) {
                          run.add_input(*pairs);
                          const auto ps = read_pairs(*pairs);
                          std::vector<AuditReport> audits;
                          for (const ContrastivePair& p : ps) audits.push_back(audit(p));
                          log_audit_summary(audits);
                          run.write_output(*out, audit_csv(ps, audits));
                          return 0;
                        }});
  }

  // extract-vector
  {
    auto* cmd = app.add_subcommand("extract-vector", "Mean-difference steering vector");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, pairs, out, style = "cot";
      std::size_t layer = 0;
      bool bare = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--pairs", o->pairs)->required();
    cmd->add_option("--layer", o->layer)->required();
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_flag("--bare-question", o->bare, "Encode the bare question, not the CoT prompt");
    cmd->add_option("--out", o->out, "Vector file")->required();
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          const auto model = load_model(run, o->weights);
                          run.add_input(o->pairs);
                          const auto pairs = read_pairs(o->pairs, [&model](std::string_view t) {
                            return model->tokenize(t);
                          });
                          ExtractionOptions x;
                          x.bare_question = o->bare;
                          x.style = prompts::parse_style(o->style);
                          x.workers = common.workers;
                          const SteeringVector v = extract_vector(*model, pairs, o->layer, x);
                          run.write_output(o->out, serialize_vector(v));
                          return 0;
                        }});
  }

  // steer-generate
  {
    auto* cmd = app.add_subcommand("steer-generate", "Greedy generation with an injected vector");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, vector, out, policy = "generated-only", templ = "cot";
      std::vector<std::string> prompts;
      std::string prompts_file;
      double lambda = 0.0;
      std::size_t max_new = 2048;
      bool force = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--vector", o->vector)->required();
    cmd->add_option("--lambda", o->lambda)->required();
    cmd->add_option("--policy", o->policy)->capture_default_str()->check(CLI::IsMember(kPolicies));
    cmd->add_option("--prompt", o->prompts, "Prompt text (repeatable)");
    cmd->add_option("--prompts-file", o->prompts_file, "JSONL with a \"prompt\" field per line");
    cmd->add_option("--template", o->templ, "Wrap prompts: cot, dense or none")
        ->capture_default_str()
        ->check(CLI::IsMember({"cot", "dense", "none"}));
    cmd->add_option("--max-new-tokens", o->max_new)->capture_default_str();
    cmd->add_flag("--force", o->force, "Accept a vector from different weights");
    cmd->add_option("--out", o->out, "Generation JSONL")->required();
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          if (o->prompts.empty() && o->prompts_file.empty()) {
                            throw UsageError("--prompt or --prompts-file is required");
                          }
                          const auto model = load_model(run, o->weights);
                          run.add_input(o->vector);
                          const SteeringVector v = load_vector(o->vector);
                          const InjectionHook hook =
                              make_hook(v, o->lambda, parse_position_policy(o->policy),
                                        model->fingerprint(), o->force);
                          std::vector<std::string> texts = o->prompts;
                          if (!o->prompts_file.empty()) {
                            run.add_input(o->prompts_file);
                            for_each_jsonl(read_file(o->prompts_file),
                                           [&](std::size_t, const json& rec) {
                                             texts.push_back(rec.at("prompt").get<std::string>());
                                           });
                          }
                          std::vector<std::string> gens(texts.size());
                          const auto n = static_cast<std::int64_t>(texts.size());
#pragma omp parallel for schedule(dynamic) num_threads(common.workers)
                          for (std::int64_t i = 0; i < n; ++i) {
                            const std::string& t = texts[static_cast<std::size_t>(i)];
                            const std::string prompt =
                                o->templ == "none"
                                    ? t
                                    : prompts::format_cot(t, prompts::parse_style(o->templ));
                            const auto ids = model->greedy_generate(encode_prompt(*model, prompt),
                                                                    o->max_new, &hook);
                            gens[static_cast<std::size_t>(i)] =
                                sanitize_utf8(model->detokenize(ids));
                          }
                          std::string out;
                          for (std::size_t i = 0; i < texts.size(); ++i) {
                            out += json_dump({{"index", i},
                                              {"prompt", texts[i]},
                                              {"generation", gens[i]},
                                              {"layer", v.layer},
                                              {"lambda", o->lambda}}) +
                                   "\n";
                          }
                          run.write_output(o->out, out);
                          return 0;
                        }});
  }

  // score-nll
  {
    auto* cmd = app.add_subcommand("score-nll", "Token-level NLL of traces under the model");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, traces, out, histogram, style = "cot";
      double bin_width = 0.1;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--traces", o->traces)->required();
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_option("--bin-width", o->bin_width)->capture_default_str();
    cmd->add_option("--out", o->out, "Per-record JSONL")->required();
    cmd->add_option("--histogram-csv", o->histogram, "Histogram CSV");
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          if (!(o->bin_width > 0.0)) throw UsageError("--bin-width must be > 0");
                          const auto model = load_model(run, o->weights);
                          run.add_input(o->traces);
                          const auto traces = read_traces(o->traces);
                          const prompts::Style style = prompts::parse_style(o->style);
                          std::vector<std::optional<NllResult>> results(traces.size());
                          std::vector<std::string> errors(traces.size());
                          const auto n = static_cast<std::int64_t>(traces.size());
#pragma omp parallel for schedule(dynamic) num_threads(common.workers)
                          for (std::int64_t i = 0; i < n; ++i) {
                            const auto k = static_cast<std::size_t>(i);
                            try {
                              const auto prompt = encode_prompt(
                                  *model, prompts::format_cot(traces[k].question, style));
                              results[k] =
                                  token_nll(*model, prompt, model->tokenize(traces[k].solution));
                            } catch (const Error& e) {
                              errors[k] = e.what();
                            }
                          }
                          std::string out;
                          std::vector<NllResult> ok;
                          for (std::size_t k = 0; k < traces.size(); ++k) {
                            json rec = {{"question_id", traces[k].question_id},
                                        {"sample_index", traces[k].sample_index}};
                            if (results[k]) {
                              rec["mean_nll"] = results[k]->mean_nll;
                              rec["t_count"] = results[k]->t_count;
                              ok.push_back(*results[k]);
                            } else {
                              rec["mean_nll"] = nullptr;
                              rec["error"] = errors[k];
                              log_line("record " + std::to_string(k + 1) + ": " + errors[k]);
                            }
                            out += json_dump(rec) + "\n";
                          }
                          run.write_output(o->out, out);
                          if (!o->histogram.empty()) {
                            run.write_output(o->histogram,
                                             histogram_csv(nll_histogram(ok, o->bin_width)));
                          }
                          return 0;
                        }});
  }

  // density
  {
    auto* cmd = app.add_subcommand("density", "Steps, tokens and density per trace");
    add_common(cmd, common, false);
    auto traces = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    cmd->add_option("--traces", *traces)->required();
    cmd->add_option("--out", *out, "CSV (stdout when omitted)");
    commands.push_back({cmd, [traces, out](RunManifest& run) {
                          run.add_input(*traces);
                          std::string csv = "question_id,n_steps,n_tokens,rho\n";
                          for (const TraceRecord& r : read_traces(*traces)) {
                            const ReasoningTrace t = ReasoningTrace::make(r.question, r.solution);
                            csv += r.question_id + "," + std::to_string(t.n_steps()) + "," +
                                   std::to_string(t.n_tokens()) + ",";
                            if (!is_blank(t.solution)) csv += fmt_double(density(t).rho);
                            csv += "\n";
                          }
                          if (out->empty()) {
                            std::fputs(csv.c_str(), stdout);
                          } else {
                            run.write_output(*out, csv);
                          }
                          return 0;
                        }});
  }

  // das
  {
    auto* cmd = app.add_subcommand("das", "Density-alignment score");
    add_common(cmd, common, true);
    struct Opts {
      std::optional<double> rho, nll;
      std::string traces, weights, out, style = "cot";
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--rho", o->rho, "Scalar mode: density");
    cmd->add_option("--nll", o->nll, "Scalar mode: mean NLL in nats");
    cmd->add_option("--traces", o->traces, "Corpus mode: trace JSONL");
    cmd->add_option("--weights", o->weights, "Corpus mode: weight file");
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_option("--out", o->out, "Corpus mode: CSV output");
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          const bool scalar = o->rho || o->nll;
                          if (scalar) {
                            if (!o->rho || !o->nll || !o->traces.empty()) {
                              throw UsageError("scalar mode needs --rho and --nll only");
                            }
                            std::printf("%s\n", fmt_double(das(*o->rho, *o->nll)).c_str());
                            return 0;
                          }
                          if (o->traces.empty() || o->weights.empty() || o->out.empty()) {
                            throw UsageError("give --rho/--nll or --traces, --weights and --out");
                          }
                          const auto model = load_model(run, o->weights);
                          run.add_input(o->traces);
                          const auto traces = read_traces(o->traces);
                          const prompts::Style style = prompts::parse_style(o->style);
                          std::vector<std::string> rows(traces.size());
                          const auto n = static_cast<std::int64_t>(traces.size());
#pragma omp parallel for schedule(dynamic) num_threads(common.workers)
                          for (std::int64_t i = 0; i < n; ++i) {
                            const TraceRecord& r = traces[static_cast<std::size_t>(i)];
                            std::string row = r.question_id + "," + std::to_string(r.sample_index);
                            try {
                              const ReasoningTrace t = ReasoningTrace::make(
                                  r.question, r.solution,
                                  [&model](std::string_view s) { return model->tokenize(s); });
                              const double rho = density(t).rho;
                              const double nll =
                                  token_nll(*model,
                                            encode_prompt(*model, prompts::format_cot(r.question, style)),
                                            t.token_ids)
                                      .mean_nll;
                              row += "," + fmt_double(rho) + "," + fmt_double(nll) + "," +
                                     fmt_double(das(rho, nll));
                            } catch (const Error&) {
                              row += ",,,";
                            }
                            rows[static_cast<std::size_t>(i)] = row + "\n";
                          }
                          std::string csv = "question_id,sample_index,rho,mean_nll,das\n";
                          for (const std::string& r : rows) csv += r;
                          run.write_output(o->out, csv);
                          return 0;
                        }});
  }

  // evaluate
  {
    auto* cmd = app.add_subcommand("evaluate", "Accuracy, density and NLL on a dataset");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, dataset, format = "gsm8k-jsonl", vector, policy = "generated-only";
      std::string style = "cot", out;
      std::optional<std::size_t> layer;
      double lambda = 0.0;
      std::size_t max_new = 2048;
      bool force = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--dataset", o->dataset)->required();
    cmd->add_option("--format", o->format)->capture_default_str()->check(CLI::IsMember(kFormats));
    cmd->add_option("--vector", o->vector, "Steering vector; omit for the unsteered baseline");
    cmd->add_option("--lambda", o->lambda)->capture_default_str();
    cmd->add_option("--layer", o->layer, "Must match the vector's layer");
    cmd->add_option("--policy", o->policy)->capture_default_str()->check(CLI::IsMember(kPolicies));
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_option("--max-new-tokens", o->max_new)->capture_default_str();
    cmd->add_flag("--force", o->force, "Accept a vector from different weights");
    cmd->add_option("--out", o->out, "Report JSON")->required();
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          if (o->vector.empty() && (o->layer || o->lambda != 0.0)) {
                            throw UsageError("--layer and --lambda need --vector");
                          }
                          const auto model = load_model(run, o->weights);
                          const auto items = load_items(run, o->dataset, o->format);
                          if (items.empty()) throw EmptySet("dataset has no items");
                          std::optional<InjectionHook> hook;
                          if (!o->vector.empty()) {
                            run.add_input(o->vector);
                            const SteeringVector v = load_vector(o->vector);
                            if (o->layer && *o->layer != v.layer) {
                              throw ConfigError("--layer " + std::to_string(*o->layer) +
                                                " does not match the vector's layer " +
                                                std::to_string(v.layer));
                            }
                            hook = make_hook(v, o->lambda, parse_position_policy(o->policy),
                                             model->fingerprint(), o->force);
                          }
                          EvalOptions e;
                          e.max_new_tokens = o->max_new;
                          e.workers = common.workers;
                          e.style = prompts::parse_style(o->style);
                          EvalReport report = evaluate(*model, items, hook ? &*hook : nullptr, e);
                          report.config.vector_file = o->vector;
                          log_line("accuracy " + fmt_double(report.aggregates.accuracy));
                          run.write_output(o->out, json_dump(report_to_json(report)) + "\n");
                          return 0;
                        }});
  }

  // sweep
  {
    auto* cmd = app.add_subcommand("sweep", "Layer x lambda grid on a validation set");
    add_common(cmd, common, true);
    struct Opts {
      std::string weights, pairs, dataset, format = "gsm8k-jsonl", policy = "generated-only";
      std::string style = "cot", out, csv, vector_out;
      std::vector<std::size_t> layers;
      double lambda_min = -20.0, lambda_max = 20.0, lambda_step = 2.0;
      std::size_t max_new = 2048;
      bool bare = false;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--weights", o->weights)->required();
    cmd->add_option("--pairs", o->pairs)->required();
    cmd->add_option("--dataset", o->dataset, "Validation items")->required();
    cmd->add_option("--format", o->format)->capture_default_str()->check(CLI::IsMember(kFormats));
    cmd->add_option("--layers", o->layers, "Candidate layers (default: all)");
    cmd->add_option("--lambda-min", o->lambda_min)->capture_default_str();
    cmd->add_option("--lambda-max", o->lambda_max)->capture_default_str();
    cmd->add_option("--lambda-step", o->lambda_step)->capture_default_str();
    cmd->add_option("--policy", o->policy)->capture_default_str()->check(CLI::IsMember(kPolicies));
    cmd->add_option("--style", o->style)->capture_default_str()->check(CLI::IsMember(kStyles));
    cmd->add_flag("--bare-question", o->bare);
    cmd->add_option("--max-new-tokens", o->max_new)->capture_default_str();
    cmd->add_option("--out", o->out, "Sweep JSON")->required();
    cmd->add_option("--sensitivity-csv", o->csv, "Per-cell CSV");
    cmd->add_option("--vector-out", o->vector_out, "Selected layer's vector");
    commands.push_back({cmd, [o, &common](RunManifest& run) {
                          if (!(o->lambda_step > 0.0) || o->lambda_max < o->lambda_min) {
                            throw UsageError("invalid lambda range");
                          }
                          const auto model = load_model(run, o->weights);
                          run.add_input(o->pairs);
                          const auto pairs = read_pairs(o->pairs, [&model](std::string_view t) {
                            return model->tokenize(t);
                          });
                          const auto items = load_items(run, o->dataset, o->format);
                          std::vector<std::size_t> layers = o->layers;
                          if (layers.empty()) {
                            for (std::int64_t l = 0; l < model->config().n_layers; ++l) {
                              layers.push_back(static_cast<std::size_t>(l));
                            }
                          }
                          SweepOptions s;
                          s.eval.max_new_tokens = o->max_new;
                          s.eval.style = prompts::parse_style(o->style);
                          s.extraction.bare_question = o->bare;
                          s.extraction.style = s.eval.style;
                          s.policy = parse_position_policy(o->policy);
                          s.workers = common.workers;
                          const auto grid = lambda_grid(o->lambda_min, o->lambda_max, o->lambda_step);
                          const SweepResult r = sweep(*model, pairs, items, layers, grid, s);
                          const SweepCell& best = r.selected();
                          log_line("selected layer " + std::to_string(best.layer) + ", lambda " +
                                   fmt_double(best.lambda));
                          json cells = json::array();
                          for (std::size_t i = 0; i < r.cells.size(); ++i) {
                            cells.push_back(report_to_json(r.reports[i]));
                          }
                          const json doc = {
                              {"schema_version", kReportSchemaVersion},
                              {"model_fingerprint", model->fingerprint()},
                              {"n_pairs", pairs.size()},
                              {"layers", layers},
                              {"lambdas", grid},
                              {"selected",
                               {{"index", r.selection.index},
                                {"layer", best.layer},
                                {"lambda", best.lambda}}},
                              {"trail", r.selection.trail},
                              {"cells", cells},
                          };
                          run.write_output(o->out, json_dump(doc) + "\n");
                          if (!o->csv.empty()) run.write_output(o->csv, sensitivity_csv(r.cells));
                          if (!o->vector_out.empty()) {
                            for (const SteeringVector& v : r.vectors) {
                              if (v.layer == best.layer) {
                                run.write_output(o->vector_out, serialize_vector(v));
                              }
                            }
                          }
                          return 0;
                        }});
  }

  // avg
  {
    auto* cmd = app.add_subcommand("avg", "Sample-weighted average accuracy");
    add_common(cmd, common, false);
    auto reports = std::make_shared<std::vector<std::string>>();
    auto entries = std::make_shared<std::vector<std::string>>();
    cmd->add_option("--report", *reports, "Report JSON (repeatable)");
    cmd->add_option("--entry", *entries, "accuracy:count pair (repeatable)");
    commands.push_back({cmd, [reports, entries](RunManifest& run) {
                          std::vector<std::pair<double, std::size_t>> acc;
                          for (const std::string& e : *entries) {
                            const std::size_t colon = e.find(':');
                            try {
                              if (colon == std::string::npos) throw std::invalid_argument(e);
                              acc.emplace_back(std::stod(e.substr(0, colon)),
                                               std::stoul(e.substr(colon + 1)));
                            } catch (const std::logic_error&) {
                              throw UsageError("--entry expects accuracy:count, got " + e);
                            }
                          }
                          for (const std::string& path : *reports) {
                            run.add_input(path);
                            const EvalReport r = report_from_json(json::parse(read_file(path)));
                            acc.emplace_back(r.aggregates.accuracy, r.aggregates.n_items);
                          }
                          std::printf("%s\n", fmt_double(weighted_average(acc)).c_str());
                          return 0;
                        }});
  }

  // split
  {
    auto* cmd = app.add_subcommand("split", "Seeded validation/test split");
    add_common(cmd, common, false);
    struct Opts {
      std::string dataset, format = "gsm8k-jsonl", validation_out, test_out;
      std::size_t validation_size = 100;
      std::uint64_t seed = 0;
    };
    auto o = std::make_shared<Opts>();
    cmd->add_option("--dataset", o->dataset)->required();
    cmd->add_option("--format", o->format)->capture_default_str()->check(CLI::IsMember(kFormats));
    cmd->add_option("--validation-size", o->validation_size)->capture_default_str();
    cmd->add_option("--seed", o->seed)->capture_default_str();
    cmd->add_option("--validation-out", o->validation_out, "plain-jsonl")->required();
    cmd->add_option("--test-out", o->test_out, "plain-jsonl")->required();
    commands.push_back({cmd, [o](RunManifest& run) {
                          auto items = load_items(run, o->dataset, o->format);
                          const Split s = split_items(std::move(items), o->validation_size, o->seed);
                          auto dump = [](const std::vector<EvalItem>& part) {
                            std::string out;
                            for (const EvalItem& it : part) {
                              out += json_dump({{"question_id", it.question_id},
                                                {"question", it.question},
                                                {"answer", it.gold_answer}}) +
                                     "\n";
                            }
                            return out;
                          };
                          run.write_output(o->validation_out, dump(s.validation));
                          run.write_output(o->test_out, dump(s.test));
                          return 0;
                        }});
  }

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  {
    std::vector<std::string> forward(args.rbegin(), args.rend());
    forward = with_env_fallbacks(app, std::move(forward));
    args.assign(forward.rbegin(), forward.rend());
  }
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (const CLI::Option* c = app.get_option_no_throw("--config"); c && c->count() > 0) {
    config_file = c->as<std::string>();
  }

  for (Command& c : commands) {
    if (!c.app->parsed()) continue;
    omp_set_num_threads(common.workers);
    try {
      RunManifest run(c.app->get_name(), *c.app, config_file);
      const int rc = c.run(run);
      run.finish();
      return rc;
    } catch (const UsageError& e) {
      log_line(std::string("usage: ") + e.what());
      return 2;
    } catch (const Error& e) {
      log_line(std::string("error: ") + e.what());
      return 1;
    } catch (const std::exception& e) {
      log_line(std::string("error: ") + e.what());
      return 1;
    }
  }
  return 2;
}
