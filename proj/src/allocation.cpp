#include "mmfl/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmfl {

namespace {

void check_signals(const std::vector<double>& signals) {
  if (signals.empty()) throw DomainError("signals must be non-empty");
  for (double f : signals)
    if (!(f > 0.0) || !std::isfinite(f))
      throw DomainError("signals must be positive and finite");
}

// Index of the first cumulative-probability bucket containing u.
int categorical_draw(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

std::vector<double> alpha_fair_probabilities(const std::vector<double>& signals, double alpha) {
  check_signals(signals);
  if (!(alpha >= 1.0)) throw DomainError("alpha_fair_probabilities: alpha must be >= 1");
  const std::size_t n = signals.size();
  std::vector<double> logw(n);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    logw[i] = (alpha - 1.0) * std::log(signals[i]);
    max_logw = std::max(max_logw, logw[i]);
  }
  std::vector<double> p(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = std::exp(logw[i] - max_logw);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> qfel_update_scale(const std::vector<double>& signals, double q) {
  check_signals(signals);
  if (!(q >= 0.0)) throw DomainError("qfel_update_scale: q must be >= 0");
  const std::size_t n = signals.size();
  std::vector<double> logw(n);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    logw[i] = q * std::log(signals[i]);
    max_logw = std::max(max_logw, logw[i]);
  }
  std::vector<double> scale(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    scale[i] = std::exp(logw[i] - max_logw);
    sum += scale[i];
  }
  // Mean-one normalization: scales sum to the task count.
  const double factor = static_cast<double>(n) / sum;
  for (double& v : scale) v *= factor;
  return scale;
}

std::vector<int> sample_active(int n_clients, double participation, Rng& rng) {
  if (n_clients < 1) throw DomainError("sample_active: need at least one client");
  if (!(participation > 0.0) || participation > 1.0)
    throw DomainError("sample_active: participation must lie in (0,1]");
  const int m = static_cast<int>(std::lround(participation * n_clients));
  if (m == 0) throw EmptyRoundError("sample_active: participation rounds to zero clients");

  std::vector<int> ids(n_clients);
  for (int i = 0; i < n_clients; ++i) ids[i] = i;
  for (int i = 0; i < m; ++i) {
    const int j = i + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n_clients - i)));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(m);
  std::sort(ids.begin(), ids.end());
  return ids;
}

namespace {

RoundAssignment build_assignment(const std::vector<int>& active, int n_tasks,
                                 const std::vector<int>& task_of) {
  RoundAssignment out;
  out.active_clients = active;
  out.selected.assign(n_tasks, {});
  for (std::size_t i = 0; i < active.size(); ++i)
    if (task_of[i] >= 0) out.selected[task_of[i]].push_back(active[i]);
  return out;
}

}  // namespace

RoundAssignment assign_tasks(const AllocationPolicy& policy, const std::vector<double>& signals,
                             const std::vector<int>& active_clients, int round_index, Rng& rng) {
  check_signals(signals);
  if (active_clients.empty()) throw EmptyRoundError("assign_tasks: no active clients");
  if (round_index < 0) throw DomainError("assign_tasks: round_index must be >= 0");
  const int n_tasks = static_cast<int>(signals.size());

  std::vector<int> active = active_clients;
  std::sort(active.begin(), active.end());

  std::vector<int> task_of(active.size(), -1);
  switch (policy.kind) {
    case PolicyKind::kAlphaFair: {
      const auto p = alpha_fair_probabilities(signals, policy.alpha);
      for (std::size_t i = 0; i < active.size(); ++i) task_of[i] = categorical_draw(p, rng);
      break;
    }
    case PolicyKind::kRandom:
    case PolicyKind::kQfelAdapted: {
      for (std::size_t i = 0; i < active.size(); ++i)
        task_of[i] = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n_tasks)));
      break;
    }
    case PolicyKind::kRoundRobin: {
      for (std::size_t i = 0; i < active.size(); ++i)
        task_of[i] = static_cast<int>((i + static_cast<std::size_t>(round_index)) % n_tasks);
      break;
    }
  }
  return build_assignment(active, n_tasks, task_of);
}

RoundAssignment assign_tasks_restricted(const AllocationPolicy& policy,
                                        const std::vector<double>& signals,
                                        const std::vector<int>& active_clients, int round_index,
                                        const std::vector<std::vector<bool>>& eligible, Rng& rng) {
  check_signals(signals);
  if (active_clients.empty()) throw EmptyRoundError("assign_tasks_restricted: no active clients");
  if (round_index < 0) throw DomainError("assign_tasks_restricted: round_index must be >= 0");
  if (policy.kind == PolicyKind::kRoundRobin)
    throw DomainError("assign_tasks_restricted: round-robin does not support restriction");
  const int n_tasks = static_cast<int>(signals.size());

  std::vector<int> active = active_clients;
  std::sort(active.begin(), active.end());

  std::vector<double> base;
  if (policy.kind == PolicyKind::kAlphaFair)
    base = alpha_fair_probabilities(signals, policy.alpha);
  else
    base.assign(n_tasks, 1.0 / n_tasks);

  std::vector<int> task_of(active.size(), -1);
  std::vector<double> p(n_tasks);
  for (std::size_t i = 0; i < active.size(); ++i) {
    const int k = active[i];
    if (k < 0 || k >= static_cast<int>(eligible.size()))
      throw ShapeError("assign_tasks_restricted: eligibility misses a client");
    if (static_cast<int>(eligible[k].size()) != n_tasks)
      throw ShapeError("assign_tasks_restricted: eligibility row has wrong task count");
    double mass = 0.0;
    for (int s = 0; s < n_tasks; ++s) {
      p[s] = eligible[k][s] ? base[s] : 0.0;
      mass += p[s];
    }
    if (mass <= 0.0) continue;  // recruited nowhere: sits the round out
    for (double& v : p) v /= mass;
    task_of[i] = categorical_draw(p, rng);
  }
  return build_assignment(active, n_tasks, task_of);
}

std::vector<double> aggregation_weights(const std::vector<double>& selected_fractions) {
  if (selected_fractions.empty())
    throw EmptyRoundError("aggregation_weights: empty selection");
  double sum = 0.0;
  for (double f : selected_fractions) {
    if (!(f > 0.0) || !std::isfinite(f))
      throw DomainError("aggregation_weights: fractions must be positive and finite");
    sum += f;
  }
  std::vector<double> w(selected_fractions.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = selected_fractions[i] / sum;
  return w;
}

}  // namespace mmfl
