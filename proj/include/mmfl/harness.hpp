#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmfl/auctions.hpp"
#include "mmfl/fedtrain.hpp"

namespace mmfl {

struct BidDistribution {
  enum class Kind { kTruncatedGaussian, kIncreasingLinear, kUniform, kExponential };
  Kind kind = Kind::kUniform;
  double mean = 0.5;   // kTruncatedGaussian, resampled into [lo, hi]
  double sd = 0.2;
  double lo = 0.0;
  double hi = 1.0;
  double rate = 1.0;   // kExponential

  double sample(Rng& rng) const;
  static BidDistribution from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

BidMatrix sample_bids(const std::vector<BidDistribution>& per_task, int n_users, Rng& rng);

struct AuctionConfig {
  enum class Mode { kRecruit, kSweep };
  Mode mode = Mode::kRecruit;
  std::vector<Mechanism> mechanisms;
  double budget = 0.0;               // kRecruit
  std::vector<double> budget_grid;   // kSweep
  int n_users = 0;                   // kSweep; defaults to n_clients
  std::vector<BidDistribution> bid_distributions;  // one per task
};

struct PolicyConfig {
  std::string name;
  AllocationPolicy policy;
};

// One simulation configuration: a single JSON document, unknown keys
// rejected.
struct ScenarioConfig {
  std::string name = "run";
  std::vector<TaskSpec> tasks;
  int n_clients = 0;
  std::pair<int, int> points_per_client{1, 1};
  double noniid_fraction = 0.0;
  int test_points_per_task = 256;
  TrainingConfig training;
  std::vector<PolicyConfig> policies;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  std::optional<AuctionConfig> auction;

  static ScenarioConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

std::vector<std::string> preset_names();
ScenarioConfig preset_config(const std::string& name);

// Per-client eligibility from an auction outcome: full winners always
// eligible, fractional winners eligible with their fraction as a per-round
// coin. Users beyond the client count are dropped.
Recruitment recruitment_from_outcome(const AuctionOutcome& outcome, int n_clients);

// Runs every (policy, seed) cell, fanning seeds out over worker threads, and
// writes one CSV and one summary JSON per cell plus a cross-seed aggregate
// per policy. Configs with an auction section first run the mechanisms:
// recruit mode restricts training to each mechanism's winners, sweep mode
// only records take-up across the budget grid.
struct RunOutputs {
  std::vector<std::string> files_written;
};

RunOutputs run_scenario(const ScenarioConfig& config, const std::string& out_dir);

// Aggregates the summary files under dir into a fairness report per policy.
nlohmann::json analyze_directory(const std::string& dir);

}  // namespace mmfl
