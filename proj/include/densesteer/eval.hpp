#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "densesteer/dataset.hpp"
#include "densesteer/io.hpp"
#include "densesteer/model.hpp"
#include "densesteer/prompts.hpp"
#include "densesteer/steering.hpp"

namespace densesteer {

inline constexpr int kReportSchemaVersion = 1;

struct EvalRecord {
  std::string question_id;
  std::string gold_answer;
  std::string generation;
  std::optional<std::string> prediction;
  bool correct = false;
  std::size_t n_steps = 0;
  std::size_t n_tokens = 0;
  std::optional<double> rho;       // absent for a blank generation
  std::optional<double> mean_nll;  // absent for an empty generation
  std::string error;               // empty when the item ran cleanly
};

// accuracy and the step/token means cover every item; rho and NLL means cover
// the items where those are defined (NaN when none are).
struct EvalAggregates {
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  double accuracy = 0.0;
  double mean_steps = 0.0;
  double mean_rho = 0.0;
  double mean_tokens = 0.0;
  double mean_nll = 0.0;
};

struct EvalConfigEcho {
  std::optional<std::size_t> layer;
  double lambda = 0.0;
  std::string vector_file;
  std::string model_fingerprint;
  std::string position_policy;
  std::size_t max_new_tokens = 0;
  std::string prompt_style = "cot";
};

struct EvalReport {
  EvalConfigEcho config;
  std::vector<EvalRecord> records;  // question-id order
  EvalAggregates aggregates;
};

EvalAggregates aggregate(std::span<const EvalRecord> records);

struct EvalOptions {
  std::size_t max_new_tokens = 2048;
  int workers = 1;
  prompts::Style style = prompts::Style::kCot;
};

// Greedy-generates each item with `hook` if given. NLL is always scored under
// the unhooked model. Per-item failures become incorrect records with an
// error tag.
EvalReport evaluate(const LanguageModel& model, std::span<const EvalItem> items,
                    const InjectionHook* hook = nullptr, const EvalOptions& opts = {});

json report_to_json(const EvalReport& report);
EvalReport report_from_json(const json& j);

struct SweepCell {
  std::size_t layer = 0;
  double lambda = 0.0;
  EvalAggregates aggregates;
};

struct Selection {
  std::size_t index = 0;  // into the cell list
  std::vector<std::string> trail;
};

// Highest accuracy, then lowest mean NLL (NaN ranks last), then smallest
// |lambda|, then lowest layer, then lowest lambda. Throws EmptyGrid.
Selection select_cell(std::span<const SweepCell> cells);

struct SweepOptions {
  EvalOptions eval;
  ExtractionOptions extraction;
  PositionPolicy policy = PositionPolicy::kGeneratedOnly;
  int workers = 1;
};

struct SweepResult {
  std::vector<SteeringVector> vectors;  // one per swept layer, in `layers` order
  std::vector<SweepCell> cells;         // layer-major, lambdas in grid order
  std::vector<EvalReport> reports;      // parallel to cells
  Selection selection;

  const SweepCell& selected() const { return cells.at(selection.index); }
};

// Default lambda grid: -20, -18, ..., 20.
std::vector<double> lambda_grid(double lo = -20.0, double hi = 20.0, double step = 2.0);

// Extracts one vector per layer from `pairs`, evaluates every (layer, lambda)
// cell on `items` and selects a cell. Throws EmptyGrid.
SweepResult sweep(const LanguageModel& model, std::span<const ContrastivePair> pairs,
                  std::span<const EvalItem> items, std::span<const std::size_t> layers,
                  std::span<const double> lambdas, const SweepOptions& opts = {});

// Columns: layer,lambda,accuracy,mean_steps,mean_rho,mean_tokens,mean_nll.
// Values are written with 17 significant digits so they parse back exactly.
std::string sensitivity_csv(std::span<const SweepCell> cells);
std::vector<SweepCell> parse_sensitivity_csv(std::string_view csv);

// Sum(accuracy_i * n_i) / Sum(n_i). Throws EmptySet.
double weighted_average(std::span<const std::pair<double, std::size_t>> accuracies);
double weighted_average(std::span<const EvalReport> reports);

}  // namespace densesteer
