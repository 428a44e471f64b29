#include "mmfl/fedtrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace mmfl {

namespace {

void check_config(const TrainingConfig& config) {
  if (config.tau < 1) throw ConfigError("TrainingConfig: tau must be >= 1");
  if (config.batch_size < 1) throw ConfigError("TrainingConfig: batch_size must be >= 1");
  if (config.rounds < 0) throw ConfigError("TrainingConfig: rounds must be >= 0");
  if (!(config.participation > 0.0) || config.participation > 1.0)
    throw ConfigError("TrainingConfig: participation must lie in (0,1]");
  if (config.lr.kind == LrSchedule::Kind::kConstant) {
    if (!(config.lr.eta >= 0.0)) throw ConfigError("LrSchedule: eta must be >= 0");
  } else {
    if (!(config.lr.mu > 0.0) || !(config.lr.gamma > 0.0))
      throw ConfigError("LrSchedule: decaying schedule needs mu > 0 and gamma > 0");
  }
}

std::vector<double> clamped(const std::vector<double>& signals) {
  std::vector<double> out = signals;
  for (double& v : out) v = std::max(v, kSignalFloor);
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

double LrSchedule::at(int round_index) const {
  if (round_index < 0) throw DomainError("LrSchedule: round_index must be >= 0");
  if (kind == Kind::kConstant) return eta;
  return 1.0 / (mu * (static_cast<double>(round_index) + gamma));
}

GlobalState init_state(const Scenario& scenario, std::uint64_t seed) {
  if (scenario.n_tasks() == 0) throw DomainError("init_state: scenario has no tasks");
  GlobalState state;
  state.round = 0;
  state.weights.reserve(scenario.tasks.size());
  for (const auto& spec : scenario.tasks) state.weights.push_back(zero_params(spec));
  state.signal_history.assign(scenario.tasks.size(), {});
  state.rng = make_rng(seed, 0x7261696eULL);
  return state;
}

RoundMetrics run_round(GlobalState& state, const Scenario& scenario, const AllocationPolicy& policy,
                       const TrainingConfig& config, const Recruitment* recruitment) {
  check_config(config);
  const auto t_start = std::chrono::steady_clock::now();
  const int n_tasks = scenario.n_tasks();
  const int n_clients = scenario.n_clients();
  if (static_cast<int>(state.weights.size()) != n_tasks)
    throw ShapeError("run_round: state does not match scenario task count");

  // Signals from the previous round; uniform before any evaluation exists.
  std::vector<double> signals(n_tasks, 1.0);
  if (state.round > 0) {
    for (int s = 0; s < n_tasks; ++s) {
      if (state.signal_history[s].empty())
        throw ShapeError("run_round: missing signal history for a task");
      signals[s] = state.signal_history[s].back();
    }
  }
  const std::vector<double> safe_signals = clamped(signals);

  const std::vector<int> active = sample_active(n_clients, config.participation, state.rng);

  RoundAssignment assignment;
  if (recruitment != nullptr) {
    if (static_cast<int>(recruitment->participation_x.size()) < n_clients)
      throw ShapeError("run_round: recruitment misses clients");
    // Fractional winners flip their per-round coin before allocation.
    std::vector<std::vector<bool>> eligible(n_clients, std::vector<bool>(n_tasks, false));
    for (int k = 0; k < n_clients; ++k) {
      if (static_cast<int>(recruitment->participation_x[k].size()) != n_tasks)
        throw ShapeError("run_round: recruitment row has wrong task count");
      for (int s = 0; s < n_tasks; ++s) {
        const double x = recruitment->participation_x[k][s];
        if (x < 0.0 || x > 1.0)
          throw DomainError("run_round: recruitment fractions must lie in [0,1]");
        if (x >= 1.0)
          eligible[k][s] = true;
        else if (x > 0.0)
          eligible[k][s] = uniform01(state.rng) < x;
      }
    }
    assignment = assign_tasks_restricted(policy, safe_signals, active, state.round, eligible,
                                         state.rng);
  } else {
    assignment = assign_tasks(policy, safe_signals, active, state.round, state.rng);
  }

  const double lr = config.lr.at(state.round);
  std::vector<double> qfel_scale;
  if (policy.kind == PolicyKind::kQfelAdapted)
    qfel_scale = qfel_update_scale(safe_signals, policy.q);

  for (int s = 0; s < n_tasks; ++s) {
    const auto& selected = assignment.selected[s];
    if (selected.empty()) continue;  // parameters stay untouched

    std::vector<ParamVector> locals;
    std::vector<double> fractions;
    locals.reserve(selected.size());
    fractions.reserve(selected.size());
    for (int k : selected) {
      locals.push_back(local_sgd(scenario.tasks[s], scenario.shards[k][s], state.weights[s],
                                 config.tau, lr, config.batch_size, state.rng));
      fractions.push_back(scenario.shards[k][s].data_fraction);
    }
    const std::vector<double> weights = aggregation_weights(fractions);
    Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(state.weights[s].coef.rows(),
                                                state.weights[s].coef.cols());
    for (std::size_t i = 0; i < locals.size(); ++i) agg += weights[i] * locals[i].coef;

    if (policy.kind == PolicyKind::kQfelAdapted) {
      state.weights[s].coef += qfel_scale[s] * (agg - state.weights[s].coef);
    } else {
      state.weights[s].coef = agg;
    }
  }

  RoundMetrics metrics;
  metrics.round = state.round;
  metrics.n_active = static_cast<int>(assignment.active_clients.size());
  metrics.loss.resize(n_tasks);
  metrics.accuracy.resize(n_tasks);
  metrics.n_selected.resize(n_tasks);
  for (int s = 0; s < n_tasks; ++s) {
    std::vector<const ClientDataset*> task_clients;
    task_clients.reserve(n_clients);
    for (int k = 0; k < n_clients; ++k) task_clients.push_back(&scenario.shards[k][s]);
    metrics.loss[s] = global_loss(scenario.tasks[s], task_clients, state.weights[s]);
    metrics.accuracy[s] =
        evaluate_accuracy(scenario.tasks[s], scenario.test_sets[s], state.weights[s]);
    metrics.n_selected[s] = static_cast<int>(assignment.selected[s].size());

    const double signal = policy.signal == SignalMode::kErrorRate
                              ? 1.0 - metrics.accuracy[s]
                              : test_loss(scenario.tasks[s], scenario.test_sets[s],
                                          state.weights[s]);
    state.signal_history[s].push_back(signal);
  }
  state.round += 1;
  metrics.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
          .count();
  return metrics;
}

TrainingResult run_training(const Scenario& scenario, const AllocationPolicy& policy,
                            const TrainingConfig& config, std::uint64_t seed,
                            const Recruitment* recruitment) {
  check_config(config);
  GlobalState state = init_state(scenario, seed);
  TrainingResult result;
  result.cumulative_selected.assign(scenario.n_tasks(), 0);
  result.rounds.reserve(config.rounds);
  for (int t = 0; t < config.rounds; ++t) {
    result.rounds.push_back(run_round(state, scenario, policy, config, recruitment));
    for (int s = 0; s < scenario.n_tasks(); ++s)
      result.cumulative_selected[s] += result.rounds.back().n_selected[s];
  }
  result.final_weights = std::move(state.weights);
  return result;
}

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rounds) {
  out << "round,task_id,loss,accuracy,n_selected\n";
  for (const auto& m : rounds) {
    for (std::size_t s = 0; s < m.loss.size(); ++s) {
      out << m.round << ',' << s << ',' << format_double(m.loss[s]) << ','
          << format_double(m.accuracy[s]) << ',' << m.n_selected[s] << '\n';
    }
  }
}

nlohmann::json run_summary(const TrainingResult& result, std::uint64_t seed) {
  nlohmann::json j;
  j["seed"] = seed;
  j["rounds"] = result.rounds.size();
  std::vector<double> final_accuracy;
  std::vector<double> final_loss;
  if (!result.rounds.empty()) {
    final_accuracy = result.rounds.back().accuracy;
    final_loss = result.rounds.back().loss;
  }
  j["final_accuracy"] = final_accuracy;
  j["final_loss"] = final_loss;
  j["cumulative_selected"] = result.cumulative_selected;
  if (!final_accuracy.empty()) {
    double mn = final_accuracy.front();
    double mean = 0.0;
    for (double a : final_accuracy) {
      mn = std::min(mn, a);
      mean += a;
    }
    mean /= static_cast<double>(final_accuracy.size());
    double var = 0.0;
    for (double a : final_accuracy) var += (a - mean) * (a - mean);
    var /= static_cast<double>(final_accuracy.size());
    j["min_accuracy"] = mn;
    j["accuracy_variance"] = var;
  }
  return j;
}

}  // namespace mmfl
