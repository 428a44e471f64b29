#include "mmfl/auctions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmfl {

namespace {

// Feasibility comparisons tolerate accumulated rounding; bid and budget
// magnitudes are O(1) in every supported workload.
constexpr double kFeasEps = 1e-9;

bool is_absent(double v) { return std::isnan(v); }

struct RankedBid {
  double bid = 0.0;
  int user = -1;
};

// Ascending by bid, ties by user id.
std::vector<std::vector<RankedBid>> ranked_bids(const BidMatrix& bids) {
  std::vector<std::vector<RankedBid>> out(bids.n_tasks());
  for (int s = 0; s < bids.n_tasks(); ++s) {
    for (int i = 0; i < bids.n_users(); ++i) {
      const double b = bids.bids[i][s];
      if (is_absent(b)) continue;
      out[s].push_back({b, i});
    }
    std::sort(out[s].begin(), out[s].end(), [](const RankedBid& a, const RankedBid& b) {
      if (a.bid != b.bid) return a.bid < b.bid;
      return a.user < b.user;
    });
  }
  return out;
}

AuctionOutcome empty_outcome(int n_users, int n_tasks) {
  AuctionOutcome out;
  out.x.assign(n_users, std::vector<double>(n_tasks, 0.0));
  out.payments.assign(n_users, std::vector<double>(n_tasks, 0.0));
  out.task_spent.assign(n_tasks, 0.0);
  out.take_up.assign(n_tasks, 0.0);
  out.min_take_up = 0.0;
  return out;
}

void finalize_take_up(AuctionOutcome& out) {
  const int n_tasks = static_cast<int>(out.take_up.size());
  for (int s = 0; s < n_tasks; ++s) {
    double sum = 0.0;
    for (const auto& row : out.x) sum += row[s];
    out.take_up[s] = sum;
  }
  out.min_take_up = out.take_up.empty()
                        ? 0.0
                        : *std::min_element(out.take_up.begin(), out.take_up.end());
}

}  // namespace

bool BidMatrix::has_bid(int user, int task) const {
  if (user < 0 || user >= n_users() || task < 0 || task >= n_tasks()) return false;
  return !is_absent(bids[user][task]);
}

void BidMatrix::validate() const {
  const std::size_t cols = bids.empty() ? 0 : bids.front().size();
  for (const auto& row : bids) {
    if (row.size() != cols) throw ShapeError("BidMatrix: ragged bid rows");
    for (double b : row) {
      if (is_absent(b)) continue;
      if (!std::isfinite(b) || b < 0.0)
        throw DomainError("BidMatrix: bids must be finite and non-negative");
    }
  }
  if (costs) {
    if (costs->size() != bids.size()) throw ShapeError("BidMatrix: cost rows do not match bids");
    for (std::size_t i = 0; i < costs->size(); ++i) {
      if ((*costs)[i].size() != cols) throw ShapeError("BidMatrix: ragged cost rows");
      for (std::size_t s = 0; s < cols; ++s) {
        const double c = (*costs)[i][s];
        if (is_absent(c)) {
          if (!is_absent(bids[i][s]))
            throw DomainError("BidMatrix: cost missing where a bid is present");
          continue;
        }
        if (!std::isfinite(c) || c < 0.0)
          throw DomainError("BidMatrix: costs must be finite and non-negative");
      }
    }
  }
}

BidMatrix BidMatrix::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("bids"))
    throw ConfigError("bid file must be an object with a 'bids' matrix");
  for (const auto& item : j.items()) {
    if (item.key() != "bids" && item.key() != "costs")
      throw ConfigError("bid file: unknown key '" + item.key() + "'");
  }
  auto parse_matrix = [](const nlohmann::json& m, const char* what) {
    if (!m.is_array()) throw ConfigError(std::string(what) + " must be an array of arrays");
    std::vector<std::vector<double>> rows;
    for (const auto& r : m) {
      if (!r.is_array()) throw ConfigError(std::string(what) + " must be an array of arrays");
      std::vector<double> row;
      for (const auto& v : r) {
        if (v.is_null())
          row.push_back(std::numeric_limits<double>::quiet_NaN());
        else if (v.is_number())
          row.push_back(v.get<double>());
        else
          throw ConfigError(std::string(what) + " entries must be numbers or null");
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };
  BidMatrix out;
  out.bids = parse_matrix(j.at("bids"), "bids");
  if (j.contains("costs")) out.costs = parse_matrix(j.at("costs"), "costs");
  out.validate();
  return out;
}

nlohmann::json AuctionOutcome::to_json() const {
  nlohmann::json j;
  j["x"] = x;
  j["payments"] = payments;
  j["task_spent"] = task_spent;
  j["take_up"] = take_up;
  j["min_take_up"] = min_take_up;
  return j;
}

Mechanism mechanism_from_string(const std::string& name) {
  if (name == "budget-fair") return Mechanism::kBudgetFair;
  if (name == "gmmfair") return Mechanism::kGreedyMaxmin;
  if (name == "maxmin") return Mechanism::kMaxminFair;
  throw ConfigError("unknown mechanism '" + name + "' (expected budget-fair, gmmfair, maxmin)");
}

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kBudgetFair: return "budget-fair";
    case Mechanism::kGreedyMaxmin: return "gmmfair";
    case Mechanism::kMaxminFair: return "maxmin";
  }
  throw DomainError("mechanism_name: bad enum");
}

nlohmann::json AuctionTrace::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& e : events) {
    nlohmann::json j;
    switch (e.kind) {
      case TraceEvent::Kind::kAdmit: j["kind"] = "admit"; break;
      case TraceEvent::Kind::kReallocate: j["kind"] = "reallocate"; break;
      case TraceEvent::Kind::kFractional: j["kind"] = "fractional"; break;
      case TraceEvent::Kind::kEndExhausted: j["kind"] = "end-exhausted"; break;
      case TraceEvent::Kind::kEndFractional: j["kind"] = "end-fractional"; break;
    }
    j["round"] = e.round;
    j["task_budgets"] = e.task_budgets;
    j["failed_tasks"] = e.failed_tasks;
    j["shortfall"] = e.shortfall;
    j["surplus"] = e.surplus;
    arr.push_back(std::move(j));
  }
  return arr;
}

AuctionOutcome proportional_share(const std::vector<double>& bids, double budget) {
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw DomainError("proportional_share: budget must be positive and finite");
  for (double b : bids)
    if (!std::isfinite(b) || b < 0.0)
      throw DomainError("proportional_share: bids must be finite and non-negative");

  const int n = static_cast<int>(bids.size());
  AuctionOutcome out = empty_outcome(n, 1);
  if (n == 0) return out;

  std::vector<RankedBid> order(n);
  for (int i = 0; i < n; ++i) order[i] = {bids[i], i};
  std::sort(order.begin(), order.end(), [](const RankedBid& a, const RankedBid& b) {
    if (a.bid != b.bid) return a.bid < b.bid;
    return a.user < b.user;
  });

  int winners = n;  // no violation: everyone wins at budget / n
  double boundary = std::numeric_limits<double>::infinity();  // first violating bid
  for (int k = 1; k <= n; ++k) {
    if (order[k - 1].bid * k > budget + kFeasEps) {
      winners = k - 1;
      boundary = order[k - 1].bid;
      break;
    }
  }
  if (winners > 0) {
    // The first violating bid caps the equal-share payment; without the cap a
    // losing bidder whose cost sits below the payment could profitably
    // undercut the winner set, breaking dominant-strategy truthfulness.
    const double pay = std::min(budget / winners, boundary);
    for (int i = 0; i < winners; ++i) {
      out.x[order[i].user][0] = 1.0;
      out.payments[order[i].user][0] = pay;
    }
    out.task_spent[0] = pay * winners;
  }
  finalize_take_up(out);
  return out;
}

AuctionOutcome budget_fair_auction(const BidMatrix& bids, double budget) {
  bids.validate();
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw DomainError("budget_fair_auction: budget must be positive and finite");
  const int n_tasks = bids.n_tasks();
  if (n_tasks == 0) return empty_outcome(bids.n_users(), 0);
  const double share = budget / n_tasks;

  AuctionOutcome out = empty_outcome(bids.n_users(), n_tasks);
  const auto ranked = ranked_bids(bids);
  for (int s = 0; s < n_tasks; ++s) {
    std::vector<double> column;
    column.reserve(ranked[s].size());
    for (const auto& rb : ranked[s]) column.push_back(rb.bid);
    const AuctionOutcome sub = proportional_share(column, share);
    for (std::size_t i = 0; i < ranked[s].size(); ++i) {
      out.x[ranked[s][i].user][s] = sub.x[i][0];
      out.payments[ranked[s][i].user][s] = sub.payments[i][0];
    }
    out.task_spent[s] = sub.task_spent[0];
  }
  finalize_take_up(out);
  return out;
}

AuctionOutcome greedy_maxmin_auction(const BidMatrix& bids, double budget) {
  bids.validate();
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw DomainError("greedy_maxmin_auction: budget must be positive and finite");
  const int n_tasks = bids.n_tasks();
  AuctionOutcome out = empty_outcome(bids.n_users(), n_tasks);
  if (n_tasks == 0) return out;

  const auto ranked = ranked_bids(bids);
  double remaining = budget;
  for (std::size_t t = 0;; ++t) {
    double layer = 0.0;
    bool exhausted = false;
    for (int s = 0; s < n_tasks; ++s) {
      if (ranked[s].size() <= t) {
        exhausted = true;
        break;
      }
      layer += ranked[s][t].bid;
    }
    if (exhausted || layer > remaining + kFeasEps) break;
    for (int s = 0; s < n_tasks; ++s) {
      const RankedBid& rb = ranked[s][t];
      out.x[rb.user][s] = 1.0;
      out.payments[rb.user][s] = rb.bid;
      out.task_spent[s] += rb.bid;
    }
    remaining -= layer;
  }
  finalize_take_up(out);
  return out;
}

AuctionOutcome maxmin_fair_auction(const BidMatrix& bids, double budget, AuctionTrace* trace) {
  bids.validate();
  if (!(budget > 0.0) || !std::isfinite(budget))
    throw DomainError("maxmin_fair_auction: budget must be positive and finite");
  const int n_tasks = bids.n_tasks();
  const int n_users = bids.n_users();
  AuctionOutcome out = empty_outcome(n_users, n_tasks);
  if (n_tasks == 0) return out;

  const auto ranked = ranked_bids(bids);
  std::vector<double> task_budget(n_tasks, budget / n_tasks);
  std::vector<std::vector<int>> winners(n_tasks);
  struct FracEntry {
    int user;
    int task;
    double x;
    double pay;
  };
  std::vector<FracEntry> fractional;

  auto record = [&](TraceEvent::Kind kind, int round, const std::vector<int>& failed, double a,
                    double c) {
    if (trace == nullptr) return;
    TraceEvent e;
    e.kind = kind;
    e.round = round;
    e.task_budgets = task_budget;
    e.failed_tasks = failed;
    e.shortfall = a;
    e.surplus = c;
    trace->events.push_back(std::move(e));
  };

  for (int t = 1;; ++t) {
    bool exhausted = false;
    for (int s = 0; s < n_tasks; ++s)
      if (static_cast<int>(ranked[s].size()) < t) exhausted = true;
    if (exhausted) {
      record(TraceEvent::Kind::kEndExhausted, t, {}, 0.0, 0.0);
      break;
    }

    std::vector<int> joined;
    std::vector<int> failed;
    for (int s = 0; s < n_tasks; ++s) {
      if (ranked[s][t - 1].bid * t <= task_budget[s] + kFeasEps)
        joined.push_back(s);
      else
        failed.push_back(s);
    }

    if (failed.empty()) {
      for (int s = 0; s < n_tasks; ++s) winners[s].push_back(ranked[s][t - 1].user);
      record(TraceEvent::Kind::kAdmit, t, {}, 0.0, 0.0);
      continue;
    }

    double shortfall = 0.0;  // what the lagging tasks still need for round t
    for (int s : failed) shortfall += ranked[s][t - 1].bid * t - task_budget[s];
    double surplus = 0.0;  // what the passing tasks can spare
    for (int s : joined) surplus += task_budget[s] - ranked[s][t - 1].bid * t;

    if (shortfall < surplus) {
      // Drain the largest surpluses down to a common level that frees exactly
      // the shortfall, then top every lagging task up to its t-th bid.
      std::vector<double> spare;
      spare.reserve(joined.size());
      for (int s : joined) spare.push_back(task_budget[s] - ranked[s][t - 1].bid * t);
      std::vector<double> sorted_spare = spare;
      std::sort(sorted_spare.begin(), sorted_spare.end(), std::greater<double>());
      double level = 0.0;
      double prefix = 0.0;
      for (std::size_t k = 0; k < sorted_spare.size(); ++k) {
        prefix += sorted_spare[k];
        const double trial = (prefix - shortfall) / static_cast<double>(k + 1);
        const double next = k + 1 < sorted_spare.size() ? sorted_spare[k + 1] : 0.0;
        if (trial + kFeasEps >= next) {
          level = std::max(trial, 0.0);
          break;
        }
      }
      for (std::size_t i = 0; i < joined.size(); ++i) {
        const int s = joined[i];
        task_budget[s] = ranked[s][t - 1].bid * t + std::min(spare[i], level);
      }
      for (int s : failed) task_budget[s] = ranked[s][t - 1].bid * t;
      for (int s = 0; s < n_tasks; ++s) winners[s].push_back(ranked[s][t - 1].user);
      record(TraceEvent::Kind::kReallocate, t, failed, shortfall, surplus);
      continue;
    }

    // Terminal fractional round: passing tasks admit their t-th bid and keep
    // exactly enough to pay it; the freed surplus funds fractional
    // participation for the lagging tasks' t-th bidders.
    for (int s : joined) {
      winners[s].push_back(ranked[s][t - 1].user);
      task_budget[s] = ranked[s][t - 1].bid * t;
    }
    const double share = surplus / static_cast<double>(failed.size());
    for (int s : failed) {
      const double b = ranked[s][t - 1].bid;
      const double x = std::min(1.0, b > 0.0 ? share / b : 1.0);
      const double pay = std::min(share, b);
      if (x > 0.0) fractional.push_back({ranked[s][t - 1].user, s, x, pay});
    }
    record(TraceEvent::Kind::kFractional, t, failed, shortfall, surplus);
    break;
  }

  for (int s = 0; s < n_tasks; ++s) {
    if (winners[s].empty()) continue;
    const double pay = task_budget[s] / static_cast<double>(winners[s].size());
    for (int u : winners[s]) {
      out.x[u][s] = 1.0;
      out.payments[u][s] = pay;
    }
    out.task_spent[s] = task_budget[s];
  }
  for (const auto& f : fractional) {
    out.x[f.user][f.task] = f.x;
    out.payments[f.user][f.task] = f.pay;
    out.task_spent[f.task] += f.pay;
  }
  finalize_take_up(out);
  return out;
}

AuctionOutcome run_auction(Mechanism m, const BidMatrix& bids, double budget,
                           AuctionTrace* trace) {
  switch (m) {
    case Mechanism::kBudgetFair: return budget_fair_auction(bids, budget);
    case Mechanism::kGreedyMaxmin: return greedy_maxmin_auction(bids, budget);
    case Mechanism::kMaxminFair: return maxmin_fair_auction(bids, budget, trace);
  }
  throw DomainError("run_auction: bad mechanism enum");
}

std::string deviation_round_type_name(DeviationRoundType t) {
  switch (t) {
    case DeviationRoundType::kNormal: return "normal";
    case DeviationRoundType::kReallocation: return "reallocation";
    case DeviationRoundType::kFractional: return "fractional";
    case DeviationRoundType::kNotWinning: return "not-winning";
  }
  throw DomainError("deviation_round_type_name: bad enum");
}

namespace {

double task_utility(const AuctionOutcome& out, const BidMatrix& costs_source, int user, int task) {
  const double c = (*costs_source.costs)[user][task];
  return out.payments[user][task] - c * out.x[user][task];
}

double total_utility(const AuctionOutcome& out, const BidMatrix& costs_source, int user) {
  double u = 0.0;
  for (int s = 0; s < costs_source.n_tasks(); ++s) {
    const double c = (*costs_source.costs)[user][s];
    if (is_absent(c)) continue;
    u += out.payments[user][s] - c * out.x[user][s];
  }
  return u;
}

// Rank the bid value (b, user) would take in the task's ascending order.
int bid_rank(const std::vector<RankedBid>& order, double b, int user) {
  int rank = 1;
  for (const auto& rb : order) {
    if (rb.user == user) continue;
    if (rb.bid < b || (rb.bid == b && rb.user < user)) ++rank;
  }
  return rank;
}

}  // namespace

DeviationReport deviation_harness(const BidMatrix& bids_with_costs, int user, int task,
                                  double deviated_bid, double budget) {
  bids_with_costs.validate();
  if (!bids_with_costs.costs)
    throw DomainError("deviation_harness: cost matrix is required");
  if (user < 0 || user >= bids_with_costs.n_users() || task < 0 ||
      task >= bids_with_costs.n_tasks())
    throw DomainError("deviation_harness: user or task out of range");
  if (!bids_with_costs.has_bid(user, task))
    throw DomainError("deviation_harness: user has no bid on this task");
  if (!std::isfinite(deviated_bid) || deviated_bid < 0.0)
    throw DomainError("deviation_harness: deviated bid must be finite and non-negative");

  // Truthful run bids exactly the costs.
  BidMatrix truthful = bids_with_costs;
  truthful.bids = *bids_with_costs.costs;
  BidMatrix deviated = truthful;
  deviated.bids[user][task] = deviated_bid;

  const AuctionOutcome truthful_out = maxmin_fair_auction(truthful, budget);
  AuctionTrace trace;
  const AuctionOutcome deviated_out = maxmin_fair_auction(deviated, budget, &trace);

  DeviationReport report;
  report.truthful_utility = task_utility(truthful_out, bids_with_costs, user, task);
  report.deviated_utility = task_utility(deviated_out, bids_with_costs, user, task);
  report.truthful_total_utility = total_utility(truthful_out, bids_with_costs, user);
  report.deviated_total_utility = total_utility(deviated_out, bids_with_costs, user);
  report.profitable = report.deviated_utility > report.truthful_utility + 1e-9;
  report.maxmin_gap = truthful_out.min_take_up - deviated_out.min_take_up;

  const auto ranked = ranked_bids(deviated);
  const int rank = bid_rank(ranked[task], deviated_bid, user);
  report.round_type = DeviationRoundType::kNotWinning;
  for (const auto& e : trace.events) {
    if (e.round != rank) continue;
    switch (e.kind) {
      case TraceEvent::Kind::kAdmit:
        report.round_type = DeviationRoundType::kNormal;
        break;
      case TraceEvent::Kind::kReallocate:
        report.round_type = DeviationRoundType::kReallocation;
        break;
      case TraceEvent::Kind::kFractional:
        report.round_type = DeviationRoundType::kFractional;
        break;
      case TraceEvent::Kind::kEndExhausted:
        report.round_type = DeviationRoundType::kNotWinning;
        break;
      case TraceEvent::Kind::kEndFractional:
        report.round_type = DeviationRoundType::kFractional;
        break;
    }
    break;
  }
  return report;
}

JoinEstimate join_probability(const BidSampler& sampler, double bid, int task, double budget,
                              Mechanism mechanism, int n_trials, Rng& rng) {
  if (n_trials < 1) throw DomainError("join_probability: n_trials must be >= 1");
  if (!std::isfinite(bid) || bid < 0.0)
    throw DomainError("join_probability: bid must be finite and non-negative");

  int full = 0;
  int partial = 0;
  for (int trial = 0; trial < n_trials; ++trial) {
    BidMatrix m = sampler(rng);
    m.costs.reset();
    const int n_tasks = m.n_tasks();
    if (task < 0 || task >= n_tasks)
      throw DomainError("join_probability: task out of range for sampled bids");
    std::vector<double> user_row(n_tasks, std::numeric_limits<double>::quiet_NaN());
    user_row[task] = bid;
    m.bids.push_back(std::move(user_row));
    m.validate();
    const AuctionOutcome out = run_auction(mechanism, m, budget);
    const double x = out.x[m.n_users() - 1][task];
    if (x >= 1.0 - 1e-12)
      ++full;
    else if (x > 1e-12)
      ++partial;
  }
  JoinEstimate est;
  est.n_trials = n_trials;
  est.p_full = static_cast<double>(full) / n_trials;
  est.p_partial = static_cast<double>(partial) / n_trials;
  est.se_full = std::sqrt(est.p_full * (1.0 - est.p_full) / n_trials);
  est.se_partial = std::sqrt(est.p_partial * (1.0 - est.p_partial) / n_trials);
  return est;
}

double starvation_probability_exponential(double rate, double budget, int n_tasks, Mechanism m) {
  if (n_tasks != 2)
    throw DomainError("starvation_probability_exponential: closed form requires two tasks");
  if (!(rate > 0.0) || !(budget > 0.0))
    throw DomainError("starvation_probability_exponential: rate and budget must be positive");
  const double lb = rate * budget;
  switch (m) {
    case Mechanism::kMaxminFair:
      // P[x1 + x2 >= B] for independent exponential minima.
      return std::exp(-lb) * (1.0 + lb);
    case Mechanism::kBudgetFair:
      // P[max(x1, x2) >= B / 2].
      return std::exp(-lb) * (2.0 * std::exp(lb / 2.0) - 1.0);
    case Mechanism::kGreedyMaxmin:
      throw DomainError("starvation_probability_exponential: no closed form for gmmfair");
  }
  throw DomainError("starvation_probability_exponential: bad mechanism enum");
}

}  // namespace mmfl
