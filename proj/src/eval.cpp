#include "densesteer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "densesteer/answer.hpp"
#include "densesteer/errors.hpp"
#include "densesteer/scoring.hpp"
#include "densesteer/trace.hpp"

namespace densesteer {

EvalAggregates aggregate(std::span<const EvalRecord> records) {
  EvalAggregates a;
  a.n_items = records.size();
  if (records.empty()) {
    a.mean_rho = a.mean_nll = NAN;
    return a;
  }
  double steps = 0, tokens = 0, rho = 0, nll = 0;
  std::size_t n_rho = 0, n_nll = 0;
  for (const EvalRecord& r : records) {
    a.n_correct += r.correct;
    steps += static_cast<double>(r.n_steps);
    tokens += static_cast<double>(r.n_tokens);
    if (r.rho) rho += *r.rho, ++n_rho;
    if (r.mean_nll) nll += *r.mean_nll, ++n_nll;
  }
  const auto n = static_cast<double>(records.size());
  a.accuracy = static_cast<double>(a.n_correct) / n;
  a.mean_steps = steps / n;
  a.mean_tokens = tokens / n;
  a.mean_rho = n_rho ? rho / static_cast<double>(n_rho) : NAN;
  a.mean_nll = n_nll ? nll / static_cast<double>(n_nll) : NAN;
  return a;
}

namespace {

EvalRecord evaluate_item(const LanguageModel& model, const EvalItem& item,
                         const InjectionHook* hook, const EvalOptions& opts) {
  EvalRecord r;
  r.question_id = item.question_id;
  r.gold_answer = item.gold_answer;
  try {
    const std::vector<TokenId> prompt =
        encode_prompt(model, prompts::format_cot(item.question, opts.style));
    const std::vector<TokenId> gen = model.greedy_generate(prompt, opts.max_new_tokens, hook);
    r.generation = sanitize_utf8(model.detokenize(gen));

    const ReasoningTrace trace = ReasoningTrace::make(
        item.question, r.generation, [&model](std::string_view t) { return model.tokenize(t); });
    r.n_steps = trace.n_steps();
    r.n_tokens = trace.n_tokens();
    r.prediction = extract_boxed_answer(r.generation);
    r.correct = r.prediction && answers_match(*r.prediction, item.gold_answer);

    if (is_blank(r.generation)) {
      r.error = "empty trace";
    } else {
      r.rho = density(trace).rho;
    }
    if (!gen.empty()) r.mean_nll = token_nll(model, prompt, gen).mean_nll;
  } catch (const std::exception& e) {
    r.correct = false;
    r.error = e.what();
  }
  return r;
}

}  // namespace

EvalReport evaluate(const LanguageModel& model, std::span<const EvalItem> items,
                    const InjectionHook* hook, const EvalOptions& opts) {
  std::vector<EvalItem> sorted(items.begin(), items.end());
  sort_by_id(sorted);

  EvalReport report;
  report.records.resize(sorted.size());
  const auto n = static_cast<std::int64_t>(sorted.size());
#pragma omp parallel for schedule(dynamic) num_threads(opts.workers > 0 ? opts.workers : 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    report.records[k] = evaluate_item(model, sorted[k], hook, opts);
  }
  report.aggregates = aggregate(report.records);

  EvalConfigEcho& c = report.config;
  c.model_fingerprint = model.fingerprint();
  c.max_new_tokens = opts.max_new_tokens;
  c.prompt_style = opts.style == prompts::Style::kCot ? "cot" : "dense";
  if (hook != nullptr) {
    c.layer = hook->layer;
    c.lambda = hook->lambda;
    c.position_policy = std::string(to_string(hook->policy));
  }
  return report;
}

namespace {

json opt_number(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? json(*v) : json(nullptr);
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return NAN;
  return j[key].get<double>();
}

}  // namespace

json report_to_json(const EvalReport& report) {
  json items = json::array();
  for (const EvalRecord& r : report.records) {
    items.push_back({
        {"question_id", r.question_id},
        {"gold_answer", r.gold_answer},
        {"generation", r.generation},
        {"prediction", r.prediction ? json(*r.prediction) : json(nullptr)},
        {"correct", r.correct},
        {"n_steps", r.n_steps},
        {"n_tokens", r.n_tokens},
        {"rho", opt_number(r.rho)},
        {"mean_nll", opt_number(r.mean_nll)},
        {"error", r.error},
    });
  }
  const EvalAggregates& a = report.aggregates;
  const EvalConfigEcho& c = report.config;
  return {
      {"schema_version", kReportSchemaVersion},
      {"config",
       {{"layer", c.layer ? json(*c.layer) : json(nullptr)},
        {"lambda", c.lambda},
        {"vector_file", c.vector_file},
        {"model_fingerprint", c.model_fingerprint},
        {"position_policy", c.position_policy},
        {"max_new_tokens", c.max_new_tokens},
        {"prompt_style", c.prompt_style}}},
      {"aggregates",
       {{"n_items", a.n_items},
        {"n_correct", a.n_correct},
        {"accuracy", a.accuracy},
        {"mean_steps", a.mean_steps},
        {"mean_rho", finite_or_null(a.mean_rho)},
        {"mean_tokens", a.mean_tokens},
        {"mean_nll", finite_or_null(a.mean_nll)}}},
      {"items", items},
  };
}

EvalReport report_from_json(const json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) {
      throw VersionError("unsupported report schema version " + j["schema_version"].dump());
    }
    EvalReport r;
    const json& c = j.at("config");
    if (!c.at("layer").is_null()) r.config.layer = c["layer"].get<std::size_t>();
    r.config.lambda = c.at("lambda").get<double>();
    r.config.vector_file = c.value("vector_file", "");
    r.config.model_fingerprint = c.value("model_fingerprint", "");
    r.config.position_policy = c.value("position_policy", "");
    r.config.max_new_tokens = c.value("max_new_tokens", std::size_t{0});
    r.config.prompt_style = c.value("prompt_style", "cot");
    for (const json& it : j.at("items")) {
      EvalRecord e;
      e.question_id = it.at("question_id").get<std::string>();
      e.gold_answer = it.value("gold_answer", "");
      e.generation = it.value("generation", "");
      if (!it.at("prediction").is_null()) e.prediction = it["prediction"].get<std::string>();
      e.correct = it.at("correct").get<bool>();
      e.n_steps = it.at("n_steps").get<std::size_t>();
      e.n_tokens = it.at("n_tokens").get<std::size_t>();
      if (!it.at("rho").is_null()) e.rho = it["rho"].get<double>();
      if (!it.at("mean_nll").is_null()) e.mean_nll = it["mean_nll"].get<double>();
      e.error = it.value("error", "");
      r.records.push_back(std::move(e));
    }
    const json& a = j.at("aggregates");
    r.aggregates.n_items = a.at("n_items").get<std::size_t>();
    r.aggregates.n_correct = a.at("n_correct").get<std::size_t>();
    r.aggregates.accuracy = a.at("accuracy").get<double>();
    r.aggregates.mean_steps = a.at("mean_steps").get<double>();
    r.aggregates.mean_rho = number_or_nan(a, "mean_rho");
    r.aggregates.mean_tokens = a.at("mean_tokens").get<double>();
    r.aggregates.mean_nll = number_or_nan(a, "mean_nll");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed report: ") + e.what());
  }
}

namespace {

// Keeps the candidates that are best under `better`-or-equal and records the
// step in the trail.
template <typename Key>
void narrow(std::vector<std::size_t>& cand, std::span<const SweepCell> cells, const char* name,
            Key key, std::vector<std::string>& trail) {
  if (cand.size() <= 1) return;
  double best = key(cells[cand.front()]);
  for (std::size_t i : cand) best = std::min(best, key(cells[i]));
  std::vector<std::size_t> kept;
  for (std::size_t i : cand) {
    if (key(cells[i]) == best) kept.push_back(i);
  }
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s: %zu of %zu candidates kept", name, kept.size(), cand.size());
  trail.emplace_back(buf);
  cand = std::move(kept);
}

}  // namespace

Selection select_cell(std::span<const SweepCell> cells) {
  if (cells.empty()) throw EmptyGrid("sweep grid is empty");
  std::vector<std::size_t> cand(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) cand[i] = i;

  Selection s;
  narrow(cand, cells, "highest accuracy", [](const SweepCell& c) { return -c.aggregates.accuracy; },
         s.trail);
  narrow(cand, cells, "lowest mean_nll",
         [](const SweepCell& c) {
           return std::isnan(c.aggregates.mean_nll) ? INFINITY : c.aggregates.mean_nll;
         },
         s.trail);
  narrow(cand, cells, "smallest |lambda|", [](const SweepCell& c) { return std::fabs(c.lambda); },
         s.trail);
  narrow(cand, cells, "lowest layer",
         [](const SweepCell& c) { return static_cast<double>(c.layer); }, s.trail);
  narrow(cand, cells, "lowest lambda", [](const SweepCell& c) { return c.lambda; }, s.trail);
  s.index = cand.front();
  return s;
}

std::vector<double> lambda_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || hi < lo) throw DomainError("invalid lambda grid");
  std::vector<double> grid;
  const auto n = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
  for (long long i = 0; i <= n; ++i) grid.push_back(lo + static_cast<double>(i) * step);
  return grid;
}

SweepResult sweep(const LanguageModel& model, std::span<const ContrastivePair> pairs,
                  std::span<const EvalItem> items, std::span<const std::size_t> layers,
                  std::span<const double> lambdas, const SweepOptions& opts) {
  if (layers.empty() || lambdas.empty()) throw EmptyGrid("sweep needs at least one layer and lambda");

  SweepResult result;
  ExtractionOptions extraction = opts.extraction;
  extraction.workers = opts.workers;
  for (std::size_t layer : layers) {
    result.vectors.push_back(extract_vector(model, pairs, layer, extraction));
  }

  for (std::size_t li = 0; li < layers.size(); ++li) {
    for (double lambda : lambdas) result.cells.push_back({layers[li], lambda, {}});
  }
  result.reports.resize(result.cells.size());

  EvalOptions eval = opts.eval;
  eval.workers = 1;
  const auto n = static_cast<std::int64_t>(result.cells.size());
  const std::size_t per_layer = lambdas.size();
#pragma omp parallel for schedule(dynamic) num_threads(opts.workers > 0 ? opts.workers : 1)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const SteeringVector& v = result.vectors[k / per_layer];
    const InjectionHook hook =
        make_hook(v, result.cells[k].lambda, opts.policy, model.fingerprint());
    result.reports[k] = evaluate(model, items, &hook, eval);
    result.cells[k].aggregates = result.reports[k].aggregates;
  }
  result.selection = select_cell(result.cells);
  return result;
}

std::string sensitivity_csv(std::span<const SweepCell> cells) {
  std::string out = "layer,lambda,accuracy,mean_steps,mean_rho,mean_tokens,mean_nll\n";
  char buf[256];
  for (const SweepCell& c : cells) {
    const EvalAggregates& a = c.aggregates;
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", c.layer, c.lambda,
                  a.accuracy, a.mean_steps, a.mean_rho, a.mean_tokens, a.mean_nll);
    out += buf;
  }
  return out;
}

std::vector<SweepCell> parse_sensitivity_csv(std::string_view csv) {
  std::vector<SweepCell> cells;
  std::istringstream in{std::string(csv)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw ParseError(line_no, "expected 7 columns");
    try {
      SweepCell c;
      c.layer = std::stoul(f[0]);
      c.lambda = std::stod(f[1]);
      c.aggregates.accuracy = std::stod(f[2]);
      c.aggregates.mean_steps = std::stod(f[3]);
      c.aggregates.mean_rho = std::stod(f[4]);
      c.aggregates.mean_tokens = std::stod(f[5]);
      c.aggregates.mean_nll = std::stod(f[6]);
      cells.push_back(c);
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return cells;
}

double weighted_average(std::span<const std::pair<double, std::size_t>> accuracies) {
  double num = 0.0;
  std::size_t den = 0;
  for (const auto& [acc, n] : accuracies) {
    num += acc * static_cast<double>(n);
    den += n;
  }
  if (den == 0) throw EmptySet("weighted average over no items");
  return num / static_cast<double>(den);
}

double weighted_average(std::span<const EvalReport> reports) {
  std::vector<std::pair<double, std::size_t>> acc;
  for (const EvalReport& r : reports) acc.emplace_back(r.aggregates.accuracy, r.aggregates.n_items);
  return weighted_average(acc);
}

}  // namespace densesteer
