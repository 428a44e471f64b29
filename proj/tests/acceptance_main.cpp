// Acceptance gate. Runs ten numbered checks (C1..C10) covering allocation
// exactness, selection-size monotonicity, fairness orderings, auction
// optimality and truthfulness, starvation probabilities, end-to-end training
// behaviour, convergence-bound envelopes, and byte-level reproducibility.
//
// Prints exactly one line per check:
//   [PASS] C3 <title> (12.41 s): <measured detail>
// and exits with the number of failed checks. Optional argv values restrict
// the run to a subset of ids, e.g. `mmfl_acceptance C4 C5`.
//
// Every tolerance is pinned here as a named constant next to its use. A
// check that exceeds its wall-clock cap fails even if its assertions hold.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mmfl/allocation.hpp"
#include "mmfl/analysis.hpp"
#include "mmfl/auctions.hpp"
#include "mmfl/common.hpp"
#include "mmfl/fedtrain.hpp"
#include "mmfl/harness.hpp"
#include "mmfl/model.hpp"

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v, int digits = 6) {
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

// ---------------------------------------------------------------------------
// C1: alpha-fair draw probabilities reproduce the hand-derived cases exactly.
bool run_c1(std::string& detail) {
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  auto check = [&](const std::vector<double>& f, double alpha, const std::vector<double>& want) {
    const std::vector<double> p = mmfl::alpha_fair_probabilities(f, alpha);
    double sum = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
      worst = std::max(worst, std::abs(p[i] - want[i]));
      sum += p[i];
    }
    worst = std::max(worst, std::abs(sum - 1.0));
  };

  // Hand-derived targets.
  check({0.5, 0.5, 0.5}, 3.0, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  check({0.9, 0.3}, 3.0, {0.9, 0.1});
  check({0.6, 0.3, 0.1}, 3.0, {36.0 / 46.0, 9.0 / 46.0, 1.0 / 46.0});

  // alpha = 1 is uniform for any positive signal vector.
  mmfl::Rng rng = mmfl::make_rng(20260822ULL, 1);
  for (int it = 0; it < 50; ++it) {
    const int s = 1 + static_cast<int>(mmfl::uniform_below(rng, 8));
    std::vector<double> f(s);
    for (double& fi : f) fi = 0.01 + 5.0 * mmfl::uniform01(rng);
    check(f, 1.0, std::vector<double>(s, 1.0 / s));
  }

  // Scale invariance: p(c * f, alpha) == p(f, alpha).
  for (int it = 0; it < 50; ++it) {
    const int s = 2 + static_cast<int>(mmfl::uniform_below(rng, 6));
    std::vector<double> f(s);
    for (double& fi : f) fi = 0.01 + 5.0 * mmfl::uniform01(rng);
    for (double alpha : {1.0, 2.0, 7.0, 33.0}) {
      const std::vector<double> base = mmfl::alpha_fair_probabilities(f, alpha);
      for (double c : {1e-3, 137.0}) {
        std::vector<double> g = f;
        for (double& gi : g) gi *= c;
        check(g, alpha, base);
      }
    }
  }

  detail = "hand cases, uniformity at alpha=1, and scale invariance; worst deviation " +
           fmt(worst, 3) + " (tolerance 1e-12)";
  return worst <= kTol;
}

// ---------------------------------------------------------------------------
// C2: E[1/|Sel|] non-increasing in alpha for K in {2,4,8}, alpha = 1..5,
// over 100 random positive 3-task signal vectors. Requires 100% per K.
bool run_c2(std::string& detail) {
  constexpr double kSlack = 1e-12;
  const std::vector<int> ks = {2, 4, 8};
  std::ostringstream out;
  bool all_ok = true;
  for (int k : ks) {
    // Identical vectors per K so the per-K counts are comparable.
    mmfl::Rng rng = mmfl::make_rng(20260822ULL, 2);
    int monotone = 0;
    const int n_vectors = 100;
    for (int v = 0; v < n_vectors; ++v) {
      std::vector<double> f(3);
      for (double& fi : f) fi = 0.05 + mmfl::uniform01(rng);
      bool mono = true;
      double prev = std::numeric_limits<double>::infinity();
      for (int a = 1; a <= 5; ++a) {
        const double term = mmfl::expected_inverse_selection_size(f, static_cast<double>(a), k);
        if (term > prev + kSlack) mono = false;
        prev = term;
      }
      if (mono) ++monotone;
    }
    if (monotone != n_vectors) all_ok = false;
    out << " K=" << k << ": " << monotone << "/100";
  }
  detail = "monotone non-increasing over alpha=1..5 required for every vector;" + out.str();
  return all_ok;
}

// ---------------------------------------------------------------------------
// C3: the alpha=2 brute-force optimum is at least as fair as the alpha=1
// optimum on random loss curves: lower-or-equal variance and
// greater-or-equal cosine ratio, on all 200 instances.
bool run_c3(std::string& detail) {
  constexpr double kSlack = 1e-12;
  const int n_instances = 200, n_clients = 10, n_tasks = 2;
  mmfl::Rng rng = mmfl::make_rng(20260822ULL, 3);
  int ok = 0;
  double worst_var = 0.0, worst_cos = 0.0;
  for (int it = 0; it < n_instances; ++it) {
    std::vector<std::vector<double>> curves(n_tasks, std::vector<double>(n_clients + 1));
    for (auto& curve : curves)
      for (double& v : curve) v = 0.1 + 2.0 * mmfl::uniform01(rng);
    const mmfl::CurveAllocation a1 = mmfl::brute_force_alpha_fair_optimum(curves, n_clients, 1.0);
    const mmfl::CurveAllocation a2 = mmfl::brute_force_alpha_fair_optimum(curves, n_clients, 2.0);
    const mmfl::FairnessReport f1 = mmfl::fairness_metrics(a1.losses);
    const mmfl::FairnessReport f2 = mmfl::fairness_metrics(a2.losses);
    worst_var = std::max(worst_var, f2.variance - f1.variance);
    worst_cos = std::max(worst_cos, f1.cosine_ratio - f2.cosine_ratio);
    if (f2.variance <= f1.variance + kSlack && f2.cosine_ratio >= f1.cosine_ratio - kSlack) ++ok;
  }
  detail = fmt(ok, 3) + "/200 instances ordered (worst variance excess " + fmt(worst_var, 3) +
           ", worst cosine deficit " + fmt(worst_cos, 3) + ")";
  return ok == n_instances;
}

// ---------------------------------------------------------------------------
// C4: greedy max-min take-up equals the exhaustive subset optimum on random
// small instances (up to 6 users, 2 tasks, bids and budgets on a 0.1 grid).
bool run_c4(std::string& detail) {
  constexpr double kFeasSlack = 1e-9;
  const int n_instances = 3000;
  mmfl::Rng rng = mmfl::make_rng(20260822ULL, 4);
  int match = 0;
  for (int it = 0; it < n_instances; ++it) {
    const int n_users = 1 + static_cast<int>(mmfl::uniform_below(rng, 6));
    mmfl::BidMatrix m;
    m.bids.assign(n_users, {kNan, kNan});
    struct Entry {
      int task;
      double bid;
    };
    std::vector<Entry> entries;
    for (int u = 0; u < n_users; ++u) {
      const int pattern = static_cast<int>(mmfl::uniform_below(rng, 10));
      const bool on0 = pattern < 4 || pattern >= 8;
      const bool on1 = pattern >= 4;
      for (int t = 0; t < 2; ++t) {
        if ((t == 0 && !on0) || (t == 1 && !on1)) continue;
        const double bid = 0.1 * (1 + static_cast<int>(mmfl::uniform_below(rng, 10)));
        m.bids[u][t] = bid;
        entries.push_back({t, bid});
      }
    }
    const double budget = 0.1 * (1 + static_cast<int>(mmfl::uniform_below(rng, 30)));
    const mmfl::AuctionOutcome greedy = mmfl::greedy_maxmin_auction(m, budget);

    // Oracle: maximize the minimum per-task winner count over every subset of
    // bid entries affordable within the same budget slack the mechanism uses.
    double best = 0.0;
    const int n_entries = static_cast<int>(entries.size());
    for (std::uint32_t mask = 0; mask < (1u << n_entries); ++mask) {
      double cost = 0.0;
      int count[2] = {0, 0};
      for (int e = 0; e < n_entries; ++e)
        if (mask & (1u << e)) {
          cost += entries[e].bid;
          ++count[entries[e].task];
        }
      if (cost <= budget + kFeasSlack)
        best = std::max(best, static_cast<double>(std::min(count[0], count[1])));
    }
    double spent = 0.0;
    for (double s : greedy.task_spent) spent += s;
    if (std::abs(greedy.min_take_up - best) < kFeasSlack && spent <= budget + kFeasSlack) ++match;
  }
  detail = fmt(match, 4) + "/" + fmt(n_instances, 4) + " instances equal the subset optimum";
  return match == n_instances;
}

// ---------------------------------------------------------------------------
// C5: truthfulness. Part A exhaustively checks the single-task proportional
// share rule (1..5 bidders, bids on a 0.1 grid, three budgets): no deviation
// may beat truthful utility by more than 1e-9. Part B fuzzes the max-min
// mechanism with 10^4 random deviations: any profitable one must land on a
// reallocation or fractional round, and the truthful-minus-deviated min
// take-up gap stays at most 2.
bool run_c5(std::string& detail) {
  constexpr double kProfitEps = 1e-9;
  constexpr double kGapCap = 2.0 + 1e-9;

  std::vector<double> grid(10);
  for (int i = 0; i < 10; ++i) grid[i] = 0.1 * (i + 1);
  const std::vector<double> budgets = {0.5, 1.0, 2.0};

  std::atomic<long long> profitable{0};
  long long checked = 0;
  for (int n = 1; n <= 5; ++n) {
    long long n_tuples = 1;
    for (int i = 0; i < n; ++i) n_tuples *= 10;
    checked += n_tuples * static_cast<long long>(budgets.size()) * n * 9;
    mmfl::parallel_for(static_cast<std::size_t>(n_tuples), [&](std::size_t tuple) {
      std::vector<double> bids(n);
      std::size_t rest = tuple;
      for (int i = 0; i < n; ++i) {
        bids[i] = grid[rest % 10];
        rest /= 10;
      }
      for (double budget : budgets) {
        const mmfl::AuctionOutcome truth = mmfl::proportional_share(bids, budget);
        for (int i = 0; i < n; ++i) {
          const double cost = bids[i];
          const double truthful_u = truth.payments[i][0] - cost * truth.x[i][0];
          for (double dev : grid) {
            if (dev == bids[i]) continue;
            std::vector<double> devbids = bids;
            devbids[i] = dev;
            const mmfl::AuctionOutcome out = mmfl::proportional_share(devbids, budget);
            const double u = out.payments[i][0] - cost * out.x[i][0];
            if (u > truthful_u + kProfitEps) ++profitable;
          }
        }
      }
    });
  }

  // Part B: max-min deviation fuzz.
  mmfl::Rng rng = mmfl::make_rng(20260822ULL, 5);
  const int n_fuzz = 10000;
  int fuzz_profitable = 0, misclassified = 0, gap_violations = 0;
  int over_uncovered = 0, under_uncovered = 0;
  double max_gap = 0.0;
  for (int it = 0; it < n_fuzz; ++it) {
    mmfl::BidMatrix m;
    std::vector<std::pair<int, int>> present;
    do {
      present.clear();
      const int n_tasks = 2 + static_cast<int>(mmfl::uniform_below(rng, 2));
      const int n_users = 2 + static_cast<int>(mmfl::uniform_below(rng, 6));
      m.bids.assign(n_users, std::vector<double>(n_tasks, kNan));
      for (int u = 0; u < n_users; ++u)
        for (int t = 0; t < n_tasks; ++t)
          if (mmfl::uniform01(rng) < 0.7) {
            m.bids[u][t] = 0.05 + 0.95 * mmfl::uniform01(rng);
            present.push_back({u, t});
          }
    } while (present.empty());
    m.costs = m.bids;  // truthful baseline: bids equal costs

    const auto [user, task] = present[mmfl::uniform_below(rng, present.size())];
    const double deviated = 0.05 + 1.45 * mmfl::uniform01(rng);
    const double budget = 0.5 + 3.5 * mmfl::uniform01(rng);
    const mmfl::DeviationReport rep = mmfl::deviation_harness(m, user, task, deviated, budget);
    max_gap = std::max(max_gap, rep.maxmin_gap);
    if (rep.maxmin_gap > kGapCap) ++gap_violations;
    if (rep.profitable) {
      ++fuzz_profitable;
      if (rep.round_type != mmfl::DeviationRoundType::kReallocation &&
          rep.round_type != mmfl::DeviationRoundType::kFractional) {
        ++misclassified;
        // Underbids steal a winner slot at the uncapped per-round payment;
        // the coverage claim is only proved for bids above cost.
        if (deviated > m.bids[user][task]) ++over_uncovered;
        else ++under_uncovered;
      }
    }
  }

  detail = "proportional share: 0 required, " + fmt(profitable.load(), 6) + " profitable of " +
           fmt(checked, 9) + " deviations; max-min fuzz: " + fmt(fuzz_profitable, 5) + "/" +
           fmt(n_fuzz, 5) + " profitable, " + fmt(misclassified, 4) +
           " outside reallocation/fractional rounds (" + fmt(over_uncovered, 4) + " overbids, " +
           fmt(under_uncovered, 4) + " underbids), max gap " + fmt(max_gap, 4) + " (cap 2), " +
           fmt(gap_violations, 4) + " gap violations";
  return profitable.load() == 0 && misclassified == 0 && gap_violations == 0;
}

// ---------------------------------------------------------------------------
// C6: two-task exponential starvation probabilities. Closed forms match the
// frozen constants, a 10^5-draw Monte Carlo agrees within 3 sigma, and the
// max-min probability never exceeds budget-fair on a 25-point (rate, budget)
// grid.
bool run_c6(std::string& detail) {
  constexpr double kClosedTol = 1e-4;
  constexpr double kMmExpected = 0.4060058497098381;   // exp(-2) * 3
  constexpr double kBfExpected = 0.600423599106272;    // exp(-2) * (2 e - 1)
  const double mm = mmfl::starvation_probability_exponential(1.0, 2.0, 2, mmfl::Mechanism::kMaxminFair);
  const double bf =
      mmfl::starvation_probability_exponential(1.0, 2.0, 2, mmfl::Mechanism::kBudgetFair);
  const bool closed_ok = std::abs(mm - kMmExpected) <= kClosedTol && std::abs(bf - kBfExpected) <= kClosedTol;

  // Monte Carlo on the per-task cheapest-bid minima, which are Exp(rate)
  // distributed: max-min starves when x1 + x2 >= B, budget-fair when either
  // exceeds B / 2.
  const int n_draws = 100000;
  mmfl::Rng rng = mmfl::make_rng(20260822ULL, 6);
  int mm_hits = 0, bf_hits = 0;
  for (int it = 0; it < n_draws; ++it) {
    const double x1 = -std::log1p(-mmfl::uniform01(rng));
    const double x2 = -std::log1p(-mmfl::uniform01(rng));
    if (x1 + x2 >= 2.0) ++mm_hits;
    if (std::max(x1, x2) >= 1.0) ++bf_hits;
  }
  const double mm_hat = static_cast<double>(mm_hits) / n_draws;
  const double bf_hat = static_cast<double>(bf_hits) / n_draws;
  const double mm_sigma = std::sqrt(kMmExpected * (1.0 - kMmExpected) / n_draws);
  const double bf_sigma = std::sqrt(kBfExpected * (1.0 - kBfExpected) / n_draws);
  const bool mc_ok =
      std::abs(mm_hat - kMmExpected) <= 3.0 * mm_sigma && std::abs(bf_hat - kBfExpected) <= 3.0 * bf_sigma;

  // Grid dominance.
  int dominated = 0;
  for (double rate : {0.5, 1.0, 1.5, 2.0, 2.5})
    for (double budget : {1.0, 2.0, 3.0, 4.0, 5.0}) {
      const double g_mm =
          mmfl::starvation_probability_exponential(rate, budget, 2, mmfl::Mechanism::kMaxminFair);
      const double g_bf =
          mmfl::starvation_probability_exponential(rate, budget, 2, mmfl::Mechanism::kBudgetFair);
      if (g_mm <= g_bf + 1e-12) ++dominated;
    }

  detail = "closed forms " + fmt(mm, 6) + "/" + fmt(bf, 6) + " vs " + fmt(kMmExpected, 6) + "/" +
           fmt(kBfExpected, 6) + "; Monte Carlo " + fmt(mm_hat, 5) + "/" + fmt(bf_hat, 5) +
           " within 3 sigma; grid dominance " + fmt(dominated, 2) + "/25";
  return closed_ok && mc_ok && dominated == 25;
}

// ---------------------------------------------------------------------------
// Shared runner for the training-based checks: executes every (policy, seed)
// cell of a config exactly the way the CLI harness does.
std::vector<std::vector<mmfl::TrainingResult>> run_cells(const mmfl::ScenarioConfig& cfg) {
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  std::vector<mmfl::Scenario> scenarios(n_seeds);
  mmfl::parallel_for(static_cast<std::size_t>(n_seeds), [&](std::size_t i) {
    scenarios[i] = mmfl::generate_scenario(cfg.tasks, cfg.n_clients, cfg.points_per_client,
                                           cfg.noniid_fraction, cfg.seeds[i],
                                           cfg.test_points_per_task);
  });
  const std::size_t n_policies = cfg.policies.size();
  std::vector<std::vector<mmfl::TrainingResult>> results(n_policies,
                                                         std::vector<mmfl::TrainingResult>(n_seeds));
  mmfl::parallel_for(n_policies * n_seeds, [&](std::size_t ci) {
    const std::size_t pi = ci / n_seeds;
    const std::size_t si = ci % n_seeds;
    results[pi][si] = mmfl::run_training(scenarios[si], cfg.policies[pi].policy, cfg.training,
                                         cfg.seeds[si]);
  });
  return results;
}

struct CellStats {
  double min_acc = 0.0;
  double mean_acc = 0.0;
  double var_acc = 0.0;
};

CellStats final_stats(const mmfl::TrainingResult& r) {
  const std::vector<double>& acc = r.rounds.back().accuracy;
  CellStats s;
  s.min_acc = *std::min_element(acc.begin(), acc.end());
  double sum = 0.0, sumsq = 0.0;
  for (double a : acc) {
    sum += a;
    sumsq += a * a;
  }
  const double n = static_cast<double>(acc.size());
  s.mean_acc = sum / n;
  s.var_acc = sumsq / n - s.mean_acc * s.mean_acc;
  return s;
}

// C7: on the three-task desk preset, alpha=3 beats uniform-random allocation
// on the worst task in at least 4 of 5 seeds, strictly lowers mean cross-task
// accuracy variance, and keeps mean accuracy within 2 percentage points.
bool run_c7(std::string& detail) {
  constexpr double kMeanAccSlack = 0.02;
  mmfl::ScenarioConfig cfg = mmfl::preset_config("exp1-desk");
  std::vector<mmfl::PolicyConfig> kept;
  for (const mmfl::PolicyConfig& p : cfg.policies)
    if (p.name == "alpha_fair_a3" || p.name == "random") kept.push_back(p);
  cfg.policies = kept;
  const std::size_t fair = cfg.policies[0].name == "alpha_fair_a3" ? 0 : 1;
  const std::size_t rnd = 1 - fair;

  const auto results = run_cells(cfg);
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  int wins = 0;
  double var_fair = 0.0, var_rnd = 0.0, mean_fair = 0.0, mean_rnd = 0.0;
  for (int si = 0; si < n_seeds; ++si) {
    const CellStats a = final_stats(results[fair][si]);
    const CellStats b = final_stats(results[rnd][si]);
    if (a.min_acc >= b.min_acc) ++wins;
    var_fair += a.var_acc / n_seeds;
    var_rnd += b.var_acc / n_seeds;
    mean_fair += a.mean_acc / n_seeds;
    mean_rnd += b.mean_acc / n_seeds;
  }
  const bool ok = wins >= 4 && var_fair < var_rnd && std::abs(mean_fair - mean_rnd) <= kMeanAccSlack;
  detail = "worst-task wins " + fmt(wins, 2) + "/5; mean accuracy variance " + fmt(var_fair, 4) +
           " vs " + fmt(var_rnd, 4) + "; mean accuracy " + fmt(mean_fair, 4) + " vs " +
           fmt(mean_rnd, 4) + " (within 2pp required)";
  return ok;
}

// ---------------------------------------------------------------------------
// C8: over alpha in {1,2,3,6,64} on the same scenario, the hardest task's
// cumulative share of assignments is non-decreasing in alpha for every seed,
// and at alpha=64 the hardest task receives at least 90% of assignments in
// rounds where it currently tops the error-rate signal.
bool run_c8(std::string& detail) {
  constexpr double kMonoSlack = 1e-9;
  constexpr double kShareFloor = 0.90;
  mmfl::ScenarioConfig cfg = mmfl::preset_config("exp4-alpha");
  std::vector<std::size_t> order(cfg.policies.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cfg.policies[a].policy.alpha < cfg.policies[b].policy.alpha;
  });
  std::size_t hard = 0;
  for (std::size_t t = 1; t < cfg.tasks.size(); ++t)
    if (cfg.tasks[t].difficulty > cfg.tasks[hard].difficulty) hard = t;

  const auto results = run_cells(cfg);
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  bool mono_ok = true, share_ok = true;
  std::ostringstream shares_out, cond_out;
  for (int si = 0; si < n_seeds; ++si) {
    double prev = -1.0;
    for (std::size_t oi = 0; oi < order.size(); ++oi) {
      const mmfl::TrainingResult& r = results[order[oi]][si];
      long total = 0, hard_n = 0;
      for (std::size_t t = 0; t < r.rounds.size(); ++t)
        for (std::size_t s = 0; s < r.rounds[t].n_selected.size(); ++s) {
          total += r.rounds[t].n_selected[s];
          if (s == hard) hard_n += r.rounds[t].n_selected[s];
        }
      const double share = total > 0 ? static_cast<double>(hard_n) / total : 0.0;
      if (share < prev - kMonoSlack) mono_ok = false;
      prev = share;
      if (oi + 1 == order.size()) shares_out << (si ? "," : "") << fmt(share, 3);
    }

    // Conditional share at the largest alpha: rounds whose previous-round
    // error rate puts the hardest task strictly on top.
    const mmfl::TrainingResult& top = results[order.back()][si];
    long cond_total = 0, cond_hard = 0;
    for (std::size_t t = 1; t < top.rounds.size(); ++t) {
      const std::vector<double>& acc = top.rounds[t - 1].accuracy;
      bool hard_is_argmax = true;
      for (std::size_t s = 0; s < acc.size(); ++s)
        if (s != hard && 1.0 - acc[s] >= 1.0 - acc[hard]) hard_is_argmax = false;
      if (!hard_is_argmax) continue;
      for (std::size_t s = 0; s < top.rounds[t].n_selected.size(); ++s) {
        cond_total += top.rounds[t].n_selected[s];
        if (s == hard) cond_hard += top.rounds[t].n_selected[s];
      }
    }
    const double cond_share = cond_total > 0 ? static_cast<double>(cond_hard) / cond_total : 0.0;
    if (cond_share < kShareFloor) share_ok = false;
    cond_out << (si ? "," : "") << fmt(cond_share, 3);
  }
  detail = std::string("shares non-decreasing in alpha: ") + (mono_ok ? "yes" : "NO") +
           "; hardest-task share at alpha=64 [" + shares_out.str() +
           "]; conditional share when it tops the signal [" + cond_out.str() + "] (floor 0.90)";
  return mono_ok && share_ok;
}

// ---------------------------------------------------------------------------
// C9: measured optimality gaps stay under the training-error bound at every
// checkpoint of a two-client least-squares run (horizons 50/100/200, 20
// seeds).
bool run_c9(std::string& detail) {
  mmfl::TaskSpec spec;
  spec.task_id = 0;
  spec.difficulty = 1.0;
  spec.input_dim = 3;
  spec.n_classes = 2;
  spec.loss_kind = mmfl::LossKind::kLeastSquares;
  const mmfl::Scenario sc = mmfl::generate_scenario({spec}, 2, {60, 60}, 0.0, 7, 32);
  const mmfl::BoundExperiment be = mmfl::run_bound_experiment(sc, 0, 2, 1000, {50, 100, 200}, 20, 7);
  int enveloped = 0;
  std::ostringstream out;
  for (std::size_t i = 0; i < be.checkpoints.size(); ++i) {
    const mmfl::BoundCheckpoint& cp = be.checkpoints[i];
    const bool ok = std::isfinite(cp.bound) && cp.bound > 0.0 && cp.mean_gap <= cp.bound;
    if (ok) ++enveloped;
    out << (i ? "; " : "") << "T=" << cp.horizon_T << " gap " << fmt(cp.mean_gap, 4) << " <= bound "
        << fmt(cp.bound, 4) << (ok ? "" : " VIOLATED");
  }
  detail = out.str();
  return enveloped == static_cast<int>(be.checkpoints.size()) && !be.checkpoints.empty();
}

// ---------------------------------------------------------------------------
// C10: every preset, run twice into fresh directories, produces byte-identical
// CSV files.
bool run_c10(std::string& detail) {
  const fs::path root = fs::temp_directory_path() / "mmfl_acceptance_c10";
  std::error_code ec;
  fs::remove_all(root, ec);
  int n_files = 0;
  bool all_ok = true;
  std::ostringstream out;
  for (const std::string& name : mmfl::preset_names()) {
    const mmfl::ScenarioConfig cfg = mmfl::preset_config(name);
    const fs::path a = root / name / "a";
    const fs::path b = root / name / "b";
    mmfl::run_scenario(cfg, a.string());
    mmfl::run_scenario(cfg, b.string());

    std::vector<std::string> csvs;
    for (const auto& entry : fs::directory_iterator(a))
      if (entry.path().extension() == ".csv") csvs.push_back(entry.path().filename().string());
    std::sort(csvs.begin(), csvs.end());
    bool preset_ok = !csvs.empty();
    for (const std::string& f : csvs) {
      std::ifstream fa(a / f, std::ios::binary);
      std::ifstream fb(b / f, std::ios::binary);
      std::stringstream sa, sb;
      sa << fa.rdbuf();
      sb << fb.rdbuf();
      if (!fb || sa.str() != sb.str()) preset_ok = false;
      ++n_files;
    }
    if (!preset_ok) {
      all_ok = false;
      out << " " << name << ": MISMATCH";
    }
  }
  fs::remove_all(root, ec);
  detail = fmt(n_files, 4) + " CSV files across " +
           fmt(static_cast<long long>(mmfl::preset_names().size()), 2) +
           " presets byte-identical" + out.str();
  return all_ok;
}

struct Criterion {
  const char* id;
  const char* title;
  double time_cap_s;  // 0 disables the cap
  bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {"C1", "alpha-fair probabilities match hand-derived cases", 1.0, run_c1},
    {"C2", "expected inverse selection size monotone in alpha", 10.0, run_c2},
    {"C3", "alpha=2 optimum at least as fair as alpha=1", 30.0, run_c3},
    {"C4", "greedy max-min take-up matches exhaustive optimum", 120.0, run_c4},
    {"C5", "auction truthfulness, exhaustive and fuzzed", 300.0, run_c5},
    {"C6", "starvation closed forms, Monte Carlo, and ordering", 60.0, run_c6},
    {"C7", "alpha=3 training lifts the worst task without mean regression", 300.0, run_c7},
    {"C8", "hardest-task share grows with alpha", 600.0, run_c8},
    {"C9", "convergence bound envelopes measured gaps", 120.0, run_c9},
    {"C10", "preset runs reproduce byte-identical CSVs", 0.0, run_c10},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> only(argv + 1, argv + argc);
  auto wanted = [&](const char* id) {
    return only.empty() || std::find(only.begin(), only.end(), id) != only.end();
  };

  int failures = 0;
  for (const Criterion& c : kCriteria) {
    if (!wanted(c.id)) continue;
    const auto t0 = Clock::now();
    std::string det;
    bool ok = false;
    try {
      ok = c.run(det);
    } catch (const std::exception& e) {
      ok = false;
      det = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (ok && c.time_cap_s > 0.0 && secs > c.time_cap_s) {
      ok = false;
      det += " [exceeded time cap of " + fmt(c.time_cap_s, 3) + " s]";
    }
    std::printf("[%s] %s %s (%.2f s): %s\n", ok ? "PASS" : "FAIL", c.id, c.title, secs,
                det.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
