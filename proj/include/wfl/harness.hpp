#pragma once

#include "wfl/sim_engine.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wfl {

struct ExperimentSpec
{
  SimConfig base;
  std::vector<PolicyKind> policies;
  std::vector<double> tau_values;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir = "results";
  int workers = 1;

  void validate() const;
};

/// Spec with every default filled in: 100 clients in three classes
/// (30/40/30), subsidies {0.1, ..., 0.5}, discount 0.9, alpha 0.15, batch 32,
/// lr 1e-3, all six policies, tau in {0.1, 10}.
ExperimentSpec default_experiment();

/// Parses flat `key = value` text; `#` starts a comment. Throws ConfigError
/// naming the offending key for unknown keys and invalid values.
ExperimentSpec parse_config_text(const std::string& text);

/// Throws ConfigError with key "path" when the file cannot be read.
ExperimentSpec parse_config(const std::filesystem::path& path);

/// Parses "a..b" or a comma list.
std::vector<std::uint64_t> parse_seed_range(const std::string& text);

void write_round_csv(const RunResult& result, std::ostream& out);
void write_round_csv(const RunResult& result, const std::filesystem::path& path);

/// Reads back the per-round columns needed to recompute summary figures.
RunResult read_round_csv(const std::filesystem::path& path);

struct CellResult
{
  PolicyKind policy = PolicyKind::Random;
  double tau = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<RunResult> runs;
};

struct SummaryRow
{
  PolicyKind policy = PolicyKind::Random;
  double tau = 0.0;
  std::size_t runs = 0;
  std::size_t converged = 0;
  stats::Summary total_delay; // converged runs only
  stats::Summary rounds;      // converged runs only
  stats::Summary final_accuracy;
  double convergence_rate = 0.0;
  std::optional<double> delay_reduction_pct; // vs the RAN cell of the same tau
};

std::vector<SummaryRow> summarize(std::span<const CellResult> cells);

void write_summary_csv(std::span<const SummaryRow> rows, std::ostream& out);

/// Accuracy-vs-delay curve of one cell on a grid with step 1 % of the largest total delay.
void write_aggregate_csv(const CellResult& cell, std::ostream& out);

std::string cell_label(PolicyKind policy, double tau);
std::string format_float(double value);

/// Runs the matrix, writing one round CSV per run, one aggregate CSV per cell
/// and summary.csv. Returns 0 on success, 2 on runtime failure.
int run_experiment(const ExperimentSpec& spec);

/// Printable exact Whittle table per (class, state) for the first tau and seed.
void print_exact_indices(const ExperimentSpec& spec, std::ostream& out);

} // namespace wfl
