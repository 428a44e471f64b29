#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmfl/common.hpp"

namespace mmfl {

// bids[i][s] is user i's bid on task s; NaN marks "no bid on this task".
// costs, when present, mirror the bid shape and carry true per-task costs for
// truthfulness experiments.
struct BidMatrix {
  std::vector<std::vector<double>> bids;
  std::optional<std::vector<std::vector<double>>> costs;

  int n_users() const { return static_cast<int>(bids.size()); }
  int n_tasks() const { return bids.empty() ? 0 : static_cast<int>(bids.front().size()); }
  bool has_bid(int user, int task) const;
  void validate() const;

  // JSON: {"bids": [[...]], "costs": [[...]]?} with null for absent bids.
  static BidMatrix from_json(const nlohmann::json& j);
};

struct AuctionOutcome {
  std::vector<std::vector<double>> x;         // participation in [0,1]
  std::vector<std::vector<double>> payments;  // same shape
  std::vector<double> task_spent;
  std::vector<double> take_up;                // per task, sum of x
  double min_take_up = 0.0;

  nlohmann::json to_json() const;
};

enum class Mechanism { kBudgetFair, kGreedyMaxmin, kMaxminFair };

Mechanism mechanism_from_string(const std::string& name);  // budget-fair|gmmfair|maxmin
std::string mechanism_name(Mechanism m);

struct TraceEvent {
  enum class Kind { kAdmit, kReallocate, kFractional, kEndExhausted, kEndFractional };
  Kind kind = Kind::kAdmit;
  int round = 0;
  std::vector<double> task_budgets;  // after the event
  std::vector<int> failed_tasks;     // tasks whose t-th bid missed the threshold
  double shortfall = 0.0;            // A
  double surplus = 0.0;              // C
};

struct AuctionTrace {
  std::vector<TraceEvent> events;
  nlohmann::json to_json() const;
};

// Single-task ascending-bid rule with a fixed budget: the k-th cheapest bid
// wins while b_(k) <= budget / k; the first violation at position k caps the
// winner set at k - 1, each winner paid min(budget / (k - 1), b_(k)) — the
// violating bid is the price boundary, which makes truthful bidding a
// dominant strategy. With no violation all n bidders win and are paid
// budget / n.
AuctionOutcome proportional_share(const std::vector<double>& bids, double budget);

// Runs the single-task rule per task on an even budget split B / S.
AuctionOutcome budget_fair_auction(const BidMatrix& bids, double budget);

// Greedy round-based filling: while the sum of every task's t-th cheapest bid
// fits the remaining budget, admit them all and pay bids. Stops when a task
// runs out of bids or the next layer no longer fits.
AuctionOutcome greedy_maxmin_auction(const BidMatrix& bids, double budget);

// Round-based max-min auction with per-task budgets B_s (initially B / S).
// Round t admits task s's t-th cheapest bid iff it is at most B_s / t; full
// winners of task s are ultimately paid B_s / |winners_s|. When some tasks
// miss the threshold, their aggregate shortfall A is compared with the
// others' aggregate surplus C: A < C drains surpluses (largest first, to a
// common level) to top every lagging task up exactly, and the auction
// continues; otherwise the lagging tasks' t-th bidders get fractional
// participation x = min(1, C / (m * b)) paid min(C / m, b) and the auction
// ends. A task running out of bids also ends the auction.
AuctionOutcome maxmin_fair_auction(const BidMatrix& bids, double budget,
                                   AuctionTrace* trace = nullptr);

AuctionOutcome run_auction(Mechanism m, const BidMatrix& bids, double budget,
                           AuctionTrace* trace = nullptr);

enum class DeviationRoundType { kNormal, kReallocation, kFractional, kNotWinning };

std::string deviation_round_type_name(DeviationRoundType t);

// Utilities on the deviated task only: payment minus cost, both scaled by the
// participation fraction.
struct DeviationReport {
  double truthful_utility = 0.0;
  double deviated_utility = 0.0;
  double truthful_total_utility = 0.0;  // across all tasks
  double deviated_total_utility = 0.0;
  bool profitable = false;
  DeviationRoundType round_type = DeviationRoundType::kNormal;
  double maxmin_gap = 0.0;  // truthful objective minus deviated objective
};

// Runs the max-min auction twice, truthful (bids = costs) and with one user's
// bid on one task replaced, and classifies the deviated bid's decision round.
DeviationReport deviation_harness(const BidMatrix& bids_with_costs, int user, int task,
                                  double deviated_bid, double budget);

using BidSampler = std::function<BidMatrix(Rng&)>;

struct JoinEstimate {
  double p_full = 0.0;
  double p_partial = 0.0;
  double se_full = 0.0;
  double se_partial = 0.0;
  int n_trials = 0;
};

// Monte-Carlo probability that a user bidding `bid` on `task` only, against
// co-bidders drawn from `sampler`, ends up with full (x = 1) or partial
// (0 < x < 1) participation under the given mechanism.
JoinEstimate join_probability(const BidSampler& sampler, double bid, int task, double budget,
                              Mechanism mechanism, int n_trials, Rng& rng);

// Closed-form probability that at least one of two tasks receives no user
// when each task's cheapest bid is exponential(rate): the max-min auction
// starves iff the two minima sum past the budget, the budget-fair split iff
// either minimum exceeds half of it.
double starvation_probability_exponential(double rate, double budget, int n_tasks, Mechanism m);

}  // namespace mmfl
