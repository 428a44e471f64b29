#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmfl/allocation.hpp"
#include "mmfl/model.hpp"

namespace mmfl {

struct LrSchedule {
  enum class Kind { kConstant, kDecaying };
  Kind kind = Kind::kConstant;
  double eta = 0.05;   // kConstant
  double mu = 1.0;     // kDecaying: eta_t = 1 / (mu * (t + gamma))
  double gamma = 1.0;

  double at(int round_index) const;
};

struct TrainingConfig {
  int tau = 1;
  int batch_size = 8;
  LrSchedule lr;
  int rounds = 1;
  double participation = 1.0;  // fraction of clients active per round
};

// Per-client task eligibility produced by recruitment. participation_x[k][s]
// in [0,1]: 0 means never assignable, 1 always, in between a per-round coin.
struct Recruitment {
  std::vector<std::vector<double>> participation_x;
};

struct RoundMetrics {
  int round = 0;
  std::vector<double> loss;      // per task, data-fraction weighted training loss
  std::vector<double> accuracy;  // per task, server test accuracy
  std::vector<int> n_selected;   // per task
  int n_active = 0;
  double wall_ms = 0.0;          // excluded from CSV output
};

struct GlobalState {
  int round = 0;
  std::vector<ParamVector> weights;                 // per task
  std::vector<std::vector<double>> signal_history;  // per task, per completed round
  Rng rng;
};

GlobalState init_state(const Scenario& scenario, std::uint64_t seed);

// One orchestration round: sample the active set, allocate tasks using the
// previous round's signals (uniform on round 0), run tau local steps on each
// selected client, aggregate with renormalized data fractions, then refresh
// signals from the server test sets. Tasks with an empty selection keep their
// parameters bit-for-bit unchanged.
RoundMetrics run_round(GlobalState& state, const Scenario& scenario, const AllocationPolicy& policy,
                       const TrainingConfig& config, const Recruitment* recruitment = nullptr);

struct TrainingResult {
  std::vector<RoundMetrics> rounds;
  std::vector<ParamVector> final_weights;
  std::vector<long> cumulative_selected;  // per task, summed over rounds
};

TrainingResult run_training(const Scenario& scenario, const AllocationPolicy& policy,
                            const TrainingConfig& config, std::uint64_t seed,
                            const Recruitment* recruitment = nullptr);

// Schema: round,task_id,loss,accuracy,n_selected; one row per round and task.
void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rounds);

nlohmann::json run_summary(const TrainingResult& result, std::uint64_t seed);

}  // namespace mmfl
