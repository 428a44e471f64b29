#pragma once

#include <vector>

#include "mmfl/common.hpp"

namespace mmfl {

enum class PolicyKind { kAlphaFair, kRandom, kRoundRobin, kQfelAdapted };

enum class SignalMode { kLoss, kErrorRate };

struct AllocationPolicy {
  PolicyKind kind = PolicyKind::kAlphaFair;
  double alpha = 1.0;            // kAlphaFair, >= 1
  double q = 0.0;                // kQfelAdapted, >= 0
  SignalMode signal = SignalMode::kErrorRate;
};

// Signals are clamped to this floor before fairness weighting so that a task
// reaching zero loss or zero error keeps a defined probability.
inline constexpr double kSignalFloor = 1e-6;

// Task draw probabilities proportional to f_s^(alpha-1), computed in log
// space so extreme alpha stays finite. alpha = 1 is exactly uniform.
std::vector<double> alpha_fair_probabilities(const std::vector<double>& signals, double alpha);

// Normalized per-task aggregation scales proportional to f_s^q with mean one
// (they sum to the task count).
std::vector<double> qfel_update_scale(const std::vector<double>& signals, double q);

// Uniform subset of round(participation * n_clients) client ids, sorted.
std::vector<int> sample_active(int n_clients, double participation, Rng& rng);

struct RoundAssignment {
  std::vector<int> active_clients;        // sorted ids
  std::vector<std::vector<int>> selected; // per task, sorted ids
};

// Assigns every active client to exactly one task. kAlphaFair and
// kQfelAdapted draw i.i.d. from the policy's distribution (uniform for
// kQfelAdapted, which applies fairness at aggregation instead); kRoundRobin
// gives the i-th active client (ascending id) task (i + round_index) mod S.
RoundAssignment assign_tasks(const AllocationPolicy& policy, const std::vector<double>& signals,
                             const std::vector<int>& active_clients, int round_index, Rng& rng);

// Same, but client k may only be assigned tasks with eligible[k][s] true.
// Clients with no eligible task sit the round out. Probabilities renormalize
// over the eligible set; kRoundRobin is not supported here.
RoundAssignment assign_tasks_restricted(const AllocationPolicy& policy,
                                        const std::vector<double>& signals,
                                        const std::vector<int>& active_clients, int round_index,
                                        const std::vector<std::vector<bool>>& eligible, Rng& rng);

// Aggregation weights for the selected clients of one task: data fractions
// renormalized over the selection.
std::vector<double> aggregation_weights(const std::vector<double>& selected_fractions);

}  // namespace mmfl
