#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmfl/model.hpp"

namespace mmfl {

struct FairnessReport {
  std::vector<double> values;
  double mean = 0.0;
  double variance = 0.0;   // population variance
  double min_value = 0.0;
  double cosine_ratio = 0.0;  // sum / sqrt(sum of squares); sqrt(S) when equal

  nlohmann::json to_json() const;
};

// values must be positive (the cosine ratio is undefined otherwise).
FairnessReport fairness_metrics(const std::vector<double>& values);

// Probability that an i.i.d. per-client coin with success rate q selects
// exactly sel_size of n_clients clients... evaluated for one labeled subset:
// q^sel_size * (1-q)^(n_clients-sel_size).
double selection_set_probability(double q, int n_clients, int sel_size);

// E[1/|Sel|] restricted to nonempty selections when each of n_clients clients
// picks the argmax-signal task with probability q = f_max^alpha / sum f^alpha:
// sum_{j=1..K} (1/j) C(K,j) q^j (1-q)^(K-j). Decreasing in alpha, so larger
// alpha shrinks the variance contribution of small selections.
double expected_inverse_selection_size(const std::vector<double>& signals, double alpha,
                                       int n_clients);

// Global and per-client minimizers of one task's objective. Least-squares
// tasks solve the normal equations; logistic tasks run full-batch gradient
// descent with backtracking until the gradient norm drops below tol.
struct TaskOptima {
  ParamVector global;
  std::vector<ParamVector> per_client;
  double f_star = 0.0;                  // global objective at its minimizer
  std::vector<double> local_f_star;     // per-client loss at each local minimizer
};

TaskOptima solve_optima(const Scenario& scenario, int task, double tol = 1e-8,
                        int max_iters = 200000);

// Data heterogeneity gap: f_s(w_s^*) minus the data-fraction-weighted sum of
// the clients' own minima. Zero iff one parameter vector is simultaneously
// optimal for every shard.
double heterogeneity_gap(const Scenario& scenario, int task, const TaskOptima& optima);

// Selection skew at w: the ratio between the expected selected-aggregate
// optimality gap and the full-population gap, with the expectation taken over
// every nonempty selection of the i.i.d. per-client coin for this task
// (exact enumeration; n_clients <= 12). task_losses feeds the coin's rate
// q = f_task^alpha / sum_s f_s^alpha. Identical shards give exactly 1.
double selection_skew(const Scenario& scenario, int task, const ParamVector& w, double alpha,
                      const std::vector<double>& task_losses, const TaskOptima& optima);

struct ConvergenceConstants {
  double smoothness_L = 0.0;
  double strong_convexity_mu = 0.0;
  double gradient_bound_G2 = 0.0;    // bound on E||stochastic gradient||^2
  double gradient_variance = 0.0;    // sigma^2
  double heterogeneity = 0.0;        // Gamma
  double skew_lower = 1.0;           // rho lower bound over the trajectory
  double skew_upper = 1.0;           // rho at the expectation-weighted point

  void validate() const;
};

enum class BoundKind {
  kPerRoundProgress,          // one-round recursion on E||w_{t+1} - w*||^2
  kTrainingError,             // E[f(w_T)] - f* under the decaying schedule
  kTrainingErrorRecruited,    // same, with stochastic auction recruitment
};

struct BoundInputs {
  int tau = 1;
  double eta_t = 0.0;                  // kPerRoundProgress
  double distance_sq = 0.0;            // kPerRoundProgress: E||w_t - w*||^2
  double selection_variance_term = 0.0;  // kPerRoundProgress: sum_Sel B_Sel sum_k lambda_k^2
  double schedule_gamma = 0.0;         // decaying-lr offset
  int horizon_T = 0;
  double w0_distance_sq = 0.0;
  double winner_factor = 1.0;          // kTrainingErrorRecruited: sum over nonempty winner sets
};

double bound_rhs(BoundKind kind, const ConvergenceConstants& c, const BoundInputs& in);

// Probability that at least one recruited winner set is nonempty:
// 1 - prod_j (1 - p_join_j). This is the recruited bound's winner factor.
double winner_set_factor(const std::vector<double>& join_probabilities);

// Minimizes sum_s loss_curves[s][n_s]^alpha over integer allocations with
// sum n_s <= n_clients (curves indexed 0..n_clients). Ties resolve to the
// lexicographically smallest counts vector.
struct CurveAllocation {
  std::vector<int> counts;
  std::vector<double> losses;
  double objective = 0.0;
};

CurveAllocation brute_force_alpha_fair_optimum(const std::vector<std::vector<double>>& loss_curves,
                                               int n_clients, double alpha);

// Measures the training-error bound's constants on a single-task scenario and
// compares measured mean optimality gaps against the bound at the given
// horizons. Runs full-participation rounds of tau local steps per client with
// the decaying schedule eta_t = 1 / (mu (t + gamma)), gamma = max(1, 8 L/mu).
// L and mu come from the data matrix; G^2 and sigma^2 are exact per-iterate
// moments maximized over every visited iterate, inflated by 10 percent.
struct BoundCheckpoint {
  int horizon_T = 0;
  double mean_gap = 0.0;  // mean over seeds of f(w_T) - f*
  double bound = 0.0;
};

struct BoundExperiment {
  ConvergenceConstants constants;
  double w0_distance_sq = 0.0;
  double schedule_gamma = 0.0;
  int tau = 1;
  int batch_size = 1;
  int n_seeds = 1;
  std::vector<BoundCheckpoint> checkpoints;

  nlohmann::json to_json() const;
};

BoundExperiment run_bound_experiment(const Scenario& scenario, int task, int tau, int batch_size,
                                     const std::vector<int>& horizons, int n_seeds,
                                     std::uint64_t seed);

}  // namespace mmfl
