#include "mmfl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace mmfl {

namespace {

double logsumexp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

void check_task_index(const Scenario& scenario, int task) {
  if (task < 0 || task >= scenario.n_tasks())
    throw DomainError("task index out of range for scenario");
}

// Hessian of the least-squares objective factorizes over classes; its
// spectrum is the spectrum of the augmented second-moment matrix.
Eigen::MatrixXd augmented_second_moment(const Scenario& scenario, int task) {
  const int dim = scenario.tasks[task].input_dim;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
  for (int k = 0; k < scenario.n_clients(); ++k) {
    const ClientDataset& shard = scenario.shards[k][task];
    Eigen::MatrixXd mk = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
    for (const auto& p : shard.points) {
      Eigen::VectorXd xa(dim + 1);
      xa.head(dim) = p.x;
      xa(dim) = 1.0;
      mk += xa * xa.transpose();
    }
    mk /= static_cast<double>(shard.points.size());
    m += shard.data_fraction * mk;
  }
  return m;
}

struct GdResult {
  ParamVector w;
  bool converged = false;
};

// Full-batch descent with backtracking line search on an arbitrary smooth
// convex objective given by loss/gradient callables.
template <typename LossFn, typename GradFn>
GdResult gradient_descent(ParamVector w, const LossFn& loss, const GradFn& grad, double tol,
                          int max_iters) {
  double step = 1.0;
  double value = loss(w);
  for (int it = 0; it < max_iters; ++it) {
    const Eigen::MatrixXd g = grad(w);
    const double gnorm2 = g.squaredNorm();
    if (std::sqrt(gnorm2) < tol) return {std::move(w), true};
    step *= 2.0;  // allow recovery after conservative iterations
    for (int back = 0; back < 60; ++back) {
      ParamVector trial = w;
      trial.coef -= step * g;
      const double trial_value = loss(trial);
      if (trial_value <= value - 0.5 * step * gnorm2) {
        w = std::move(trial);
        value = trial_value;
        break;
      }
      step *= 0.5;
      if (back == 59)
        throw OptimizationError("gradient_descent: line search failed to make progress");
    }
  }
  return {std::move(w), false};
}

}  // namespace

nlohmann::json FairnessReport::to_json() const {
  nlohmann::json j;
  j["values"] = values;
  j["mean"] = mean;
  j["variance"] = variance;
  j["min"] = min_value;
  j["cosine_ratio"] = cosine_ratio;
  return j;
}

FairnessReport fairness_metrics(const std::vector<double>& values) {
  if (values.empty()) throw DomainError("fairness_metrics: need at least one value");
  for (double v : values)
    if (!(v > 0.0) || !std::isfinite(v))
      throw DomainError("fairness_metrics: values must be positive and finite");
  FairnessReport r;
  r.values = values;
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  double sumsq = 0.0;
  double mn = values.front();
  for (double v : values) {
    sum += v;
    sumsq += v * v;
    mn = std::min(mn, v);
  }
  r.mean = sum / n;
  double var = 0.0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.variance = var / n;
  r.min_value = mn;
  r.cosine_ratio = sum / std::sqrt(sumsq);
  return r;
}

double selection_set_probability(double q, int n_clients, int sel_size) {
  if (!(q >= 0.0) || !(q <= 1.0)) throw DomainError("selection_set_probability: q not in [0,1]");
  if (n_clients < 1) throw DomainError("selection_set_probability: need at least one client");
  if (sel_size < 0 || sel_size > n_clients)
    throw DomainError("selection_set_probability: selection size out of range");
  return std::pow(q, sel_size) * std::pow(1.0 - q, n_clients - sel_size);
}

double expected_inverse_selection_size(const std::vector<double>& signals, double alpha,
                                       int n_clients) {
  if (signals.empty()) throw DomainError("expected_inverse_selection_size: empty signals");
  for (double f : signals)
    if (!(f > 0.0) || !std::isfinite(f))
      throw DomainError("expected_inverse_selection_size: signals must be positive");
  if (!(alpha >= 1.0)) throw DomainError("expected_inverse_selection_size: alpha must be >= 1");
  if (n_clients < 1 || n_clients > 100000)
    throw DomainError("expected_inverse_selection_size: unsupported client count");

  std::vector<double> logs(signals.size());
  for (std::size_t i = 0; i < signals.size(); ++i) logs[i] = alpha * std::log(signals[i]);
  const double log_q = *std::max_element(logs.begin(), logs.end()) - logsumexp(logs);
  const double q = std::exp(log_q);
  if (q >= 1.0) return 1.0 / static_cast<double>(n_clients);

  const double log1mq = std::log1p(-q);
  const double k = static_cast<double>(n_clients);
  double sum = 0.0;
  for (int j = 1; j <= n_clients; ++j) {
    const double log_binom =
        std::lgamma(k + 1.0) - std::lgamma(j + 1.0) - std::lgamma(k - j + 1.0);
    sum += std::exp(log_binom + j * log_q + (k - j) * log1mq) / static_cast<double>(j);
  }
  return sum;
}

TaskOptima solve_optima(const Scenario& scenario, int task, double tol, int max_iters) {
  check_task_index(scenario, task);
  const TaskSpec& spec = scenario.tasks[task];
  const int dim = spec.input_dim;

  std::vector<const ClientDataset*> clients;
  for (int k = 0; k < scenario.n_clients(); ++k) clients.push_back(&scenario.shards[k][task]);

  auto solve_one = [&](const std::vector<const ClientDataset*>& group) {
    // Weight clients as the task objective does, renormalized over the group
    // (a single client gets weight one).
    double fraction_sum = 0.0;
    for (const ClientDataset* c : group) fraction_sum += c->data_fraction;
    auto weight_of = [&](const ClientDataset* c) { return c->data_fraction / fraction_sum; };

    auto loss = [&](const ParamVector& w) {
      double sum = 0.0;
      for (const ClientDataset* c : group) sum += weight_of(c) * local_loss(spec, *c, w);
      return sum;
    };
    auto grad = [&](const ParamVector& w) {
      Eigen::MatrixXd g = Eigen::MatrixXd::Zero(spec.n_classes, dim + 1);
      for (const ClientDataset* c : group) g += weight_of(c) * local_gradient(spec, *c, w);
      return g;
    };

    ParamVector w = zero_params(spec);
    if (spec.loss_kind == LossKind::kLeastSquares) {
      // Normal equations; the gradient check below guards rank deficiency.
      Eigen::MatrixXd second = Eigen::MatrixXd::Zero(dim + 1, dim + 1);
      Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(spec.n_classes, dim + 1);
      for (const ClientDataset* c : group) {
        const double scale = weight_of(c) / static_cast<double>(c->points.size());
        for (const auto& p : c->points) {
          Eigen::VectorXd xa(dim + 1);
          xa.head(dim) = p.x;
          xa(dim) = 1.0;
          second += scale * (xa * xa.transpose());
          cross.row(p.label) += scale * xa.transpose();
        }
      }
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(second);
      if (ldlt.info() == Eigen::Success)
        w.coef = ldlt.solve(cross.transpose()).transpose();
    }
    if (grad(w).norm() >= tol) {
      const GdResult r = gradient_descent(std::move(w), loss, grad, tol, max_iters);
      if (!r.converged)
        throw OptimizationError(
            "solve_optima: gradient descent did not reach tolerance; the task "
            "objective may have no attained minimizer");
      w = r.w;
    }
    return std::pair<ParamVector, double>(w, loss(w));
  };

  TaskOptima optima;
  optima.global = solve_one(clients).first;
  optima.f_star = global_loss(spec, clients, optima.global);
  optima.per_client.reserve(clients.size());
  optima.local_f_star.reserve(clients.size());
  for (const ClientDataset* c : clients) {
    auto [w_local, f_local] = solve_one({c});
    optima.per_client.push_back(std::move(w_local));
    optima.local_f_star.push_back(f_local);
  }
  return optima;
}

double heterogeneity_gap(const Scenario& scenario, int task, const TaskOptima& optima) {
  check_task_index(scenario, task);
  if (static_cast<int>(optima.local_f_star.size()) != scenario.n_clients())
    throw ShapeError("heterogeneity_gap: optima do not match the scenario");
  double weighted_local = 0.0;
  for (int k = 0; k < scenario.n_clients(); ++k)
    weighted_local += scenario.shards[k][task].data_fraction * optima.local_f_star[k];
  return optima.f_star - weighted_local;
}

double selection_skew(const Scenario& scenario, int task, const ParamVector& w, double alpha,
                      const std::vector<double>& task_losses, const TaskOptima& optima) {
  check_task_index(scenario, task);
  const int n_clients = scenario.n_clients();
  if (n_clients > 12)
    throw DomainError("selection_skew: exact enumeration supports at most 12 clients");
  if (task >= static_cast<int>(task_losses.size()))
    throw ShapeError("selection_skew: task_losses misses the task");
  if (!(alpha >= 1.0)) throw DomainError("selection_skew: alpha must be >= 1");
  if (static_cast<int>(optima.local_f_star.size()) != n_clients)
    throw ShapeError("selection_skew: optima do not match the scenario");

  std::vector<double> logs(task_losses.size());
  for (std::size_t i = 0; i < task_losses.size(); ++i) {
    if (!(task_losses[i] > 0.0))
      throw DomainError("selection_skew: task losses must be positive");
    logs[i] = alpha * std::log(task_losses[i]);
  }
  const double q = std::exp(logs[task] - logsumexp(logs));

  const TaskSpec& spec = scenario.tasks[task];
  std::vector<double> gap(n_clients);       // F_k(w) - F_k*
  std::vector<double> fraction(n_clients);  // p_k
  for (int k = 0; k < n_clients; ++k) {
    gap[k] = local_loss(spec, scenario.shards[k][task], w) - optima.local_f_star[k];
    fraction[k] = scenario.shards[k][task].data_fraction;
  }

  double denominator = 0.0;
  for (int k = 0; k < n_clients; ++k) denominator += fraction[k] * gap[k];
  if (!(denominator > 0.0))
    throw UndefinedSkewError("selection_skew: population optimality gap is not positive");

  double weighted = 0.0;
  double mass = 0.0;
  const unsigned full = 1u << n_clients;
  for (unsigned sel = 1; sel < full; ++sel) {
    const int size = __builtin_popcount(sel);
    const double prob = selection_set_probability(q, n_clients, size);
    double frac_sum = 0.0;
    double gap_sum = 0.0;
    for (int k = 0; k < n_clients; ++k) {
      if (!(sel & (1u << k))) continue;
      frac_sum += fraction[k];
      gap_sum += fraction[k] * gap[k];
    }
    weighted += prob * (gap_sum / frac_sum);
    mass += prob;
  }
  // Conditional on a nonempty selection, so identical shards give exactly 1.
  return (weighted / mass) / denominator;
}

void ConvergenceConstants::validate() const {
  if (!(smoothness_L > 0.0)) throw DomainError("constants: L must be positive");
  if (!(strong_convexity_mu > 0.0)) throw DomainError("constants: mu must be positive");
  if (smoothness_L < strong_convexity_mu) throw DomainError("constants: L must be >= mu");
  if (!(gradient_bound_G2 >= 0.0)) throw DomainError("constants: G^2 must be >= 0");
  if (!(gradient_variance >= 0.0)) throw DomainError("constants: sigma^2 must be >= 0");
  if (!(heterogeneity >= 0.0)) throw DomainError("constants: Gamma must be >= 0");
  if (!(skew_lower > 0.0)) throw DomainError("constants: skew lower bound must be positive");
  if (skew_upper < skew_lower)
    throw DomainError("constants: skew upper bound must be >= lower bound");
}

double bound_rhs(BoundKind kind, const ConvergenceConstants& c, const BoundInputs& in) {
  c.validate();
  if (in.tau < 1) throw DomainError("bound_rhs: tau must be >= 1");
  const double tau2 = static_cast<double>(in.tau) * in.tau;
  const double g2 = c.gradient_bound_G2;
  const double mu = c.strong_convexity_mu;
  const double L = c.smoothness_L;

  switch (kind) {
    case BoundKind::kPerRoundProgress: {
      if (!(in.eta_t > 0.0)) throw DomainError("bound_rhs: eta_t must be positive");
      if (in.distance_sq < 0.0 || in.selection_variance_term < 0.0)
        throw DomainError("bound_rhs: negative per-round inputs");
      const double contraction = 1.0 - in.eta_t * mu * (1.0 + 3.0 * c.skew_lower / 8.0);
      return contraction * in.distance_sq +
             2.0 * in.eta_t * c.heterogeneity * (c.skew_upper - c.skew_lower) +
             in.eta_t * in.eta_t * c.gradient_variance * in.selection_variance_term +
             in.eta_t * in.eta_t * (32.0 * tau2 * g2 + 6.0 * c.skew_lower * L * c.heterogeneity);
    }
    case BoundKind::kTrainingError:
    case BoundKind::kTrainingErrorRecruited: {
      if (in.horizon_T < 1) throw DomainError("bound_rhs: horizon must be >= 1");
      if (!(in.schedule_gamma > 0.0)) throw DomainError("bound_rhs: schedule gamma must be > 0");
      if (in.w0_distance_sq < 0.0) throw DomainError("bound_rhs: negative initial distance");
      double noise_term;
      if (kind == BoundKind::kTrainingError) {
        noise_term = 4.0 * (16.0 * tau2 * g2 + c.gradient_variance);
      } else {
        if (!(in.winner_factor >= 0.0) || in.winner_factor > 1.0)
          throw DomainError("bound_rhs: winner factor must lie in [0,1]");
        noise_term = 64.0 * tau2 * g2 * in.winner_factor + 4.0 * c.gradient_variance;
      }
      const double leading =
          noise_term / (3.0 * c.skew_lower * mu * mu) +
          8.0 * L * L * c.heterogeneity / (mu * mu) +
          L * in.schedule_gamma * in.w0_distance_sq / 2.0;
      const double residual = (8.0 * L * c.heterogeneity / (3.0 * mu)) *
                              (c.skew_upper / c.skew_lower - 1.0);
      return leading / (static_cast<double>(in.horizon_T) + in.schedule_gamma) + residual;
    }
  }
  throw DomainError("bound_rhs: bad kind enum");
}

double winner_set_factor(const std::vector<double>& join_probabilities) {
  double miss = 1.0;
  for (double p : join_probabilities) {
    if (!(p >= 0.0) || p > 1.0)
      throw DomainError("winner_set_factor: probabilities must lie in [0,1]");
    miss *= 1.0 - p;
  }
  return 1.0 - miss;
}

CurveAllocation brute_force_alpha_fair_optimum(const std::vector<std::vector<double>>& loss_curves,
                                               int n_clients, double alpha) {
  if (loss_curves.empty()) throw DomainError("brute_force: need at least one curve");
  if (n_clients < 0) throw DomainError("brute_force: n_clients must be >= 0");
  if (!(alpha >= 1.0)) throw DomainError("brute_force: alpha must be >= 1");
  const int n_tasks = static_cast<int>(loss_curves.size());
  if (n_tasks > 4) throw DomainError("brute_force: enumeration supports at most 4 tasks");
  for (const auto& curve : loss_curves) {
    if (static_cast<int>(curve.size()) != n_clients + 1)
      throw ShapeError("brute_force: each curve needs an entry for 0..n_clients");
    for (double v : curve)
      if (!(v > 0.0) || !std::isfinite(v))
        throw DomainError("brute_force: curve values must be positive and finite");
  }

  CurveAllocation best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<int> counts(n_tasks, 0);
  // Lexicographic enumeration; strict improvement keeps the first optimum.
  const std::function<void(int, int)> recurse = [&](int s, int used) {
    if (s == n_tasks) {
      double obj = 0.0;
      for (int i = 0; i < n_tasks; ++i)
        obj += std::pow(loss_curves[i][counts[i]], alpha);
      if (obj < best.objective) {
        best.objective = obj;
        best.counts = counts;
      }
      return;
    }
    for (int n = 0; n + used <= n_clients; ++n) {
      counts[s] = n;
      recurse(s + 1, used + n);
    }
    counts[s] = 0;
  };
  recurse(0, 0);

  best.losses.resize(n_tasks);
  for (int i = 0; i < n_tasks; ++i) best.losses[i] = loss_curves[i][best.counts[i]];
  return best;
}

nlohmann::json BoundExperiment::to_json() const {
  nlohmann::json j;
  j["smoothness_L"] = constants.smoothness_L;
  j["strong_convexity_mu"] = constants.strong_convexity_mu;
  j["gradient_bound_G2"] = constants.gradient_bound_G2;
  j["gradient_variance"] = constants.gradient_variance;
  j["heterogeneity"] = constants.heterogeneity;
  j["skew_lower"] = constants.skew_lower;
  j["skew_upper"] = constants.skew_upper;
  j["w0_distance_sq"] = w0_distance_sq;
  j["schedule_gamma"] = schedule_gamma;
  j["tau"] = tau;
  j["batch_size"] = batch_size;
  j["n_seeds"] = n_seeds;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& cp : checkpoints) {
    rows.push_back({{"horizon_T", cp.horizon_T}, {"mean_gap", cp.mean_gap}, {"bound", cp.bound}});
  }
  j["checkpoints"] = rows;
  return j;
}

BoundExperiment run_bound_experiment(const Scenario& scenario, int task, int tau, int batch_size,
                                     const std::vector<int>& horizons, int n_seeds,
                                     std::uint64_t seed) {
  check_task_index(scenario, task);
  if (scenario.tasks[task].loss_kind != LossKind::kLeastSquares)
    throw DomainError("run_bound_experiment: requires a least-squares task");
  if (tau < 1 || batch_size < 1 || n_seeds < 1)
    throw DomainError("run_bound_experiment: tau, batch_size, n_seeds must be >= 1");
  if (horizons.empty()) throw DomainError("run_bound_experiment: need at least one horizon");
  for (int h : horizons)
    if (h < 1) throw DomainError("run_bound_experiment: horizons must be >= 1");

  const TaskSpec& spec = scenario.tasks[task];
  const int n_clients = scenario.n_clients();

  const Eigen::MatrixXd second = augmented_second_moment(scenario, task);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second);
  if (eig.info() != Eigen::Success)
    throw OptimizationError("run_bound_experiment: eigen decomposition failed");
  const double mu = eig.eigenvalues().minCoeff();
  const double L = eig.eigenvalues().maxCoeff();
  if (!(mu > 0.0))
    throw OptimizationError("run_bound_experiment: data matrix is not positive definite");

  const TaskOptima optima = solve_optima(scenario, task);
  const double gamma_het = std::max(0.0, heterogeneity_gap(scenario, task, optima));
  const double schedule_gamma = std::max(1.0, 8.0 * L / mu);

  std::vector<const ClientDataset*> clients;
  for (int k = 0; k < n_clients; ++k) clients.push_back(&scenario.shards[k][task]);

  const int max_T = *std::max_element(horizons.begin(), horizons.end());
  std::vector<std::vector<double>> gap_at(n_seeds, std::vector<double>(horizons.size(), 0.0));
  std::vector<double> max_g2(n_seeds, 0.0);
  std::vector<double> max_var(n_seeds, 0.0);

  parallel_for(static_cast<std::size_t>(n_seeds), [&](std::size_t i) {
    Rng rng = make_rng(seed, 0xb0d1ULL + i);
    ParamVector w = zero_params(spec);
    for (int t = 0; t < max_T; ++t) {
      const double eta = 1.0 / (mu * (static_cast<double>(t) + schedule_gamma));
      Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(w.coef.rows(), w.coef.cols());
      for (const ClientDataset* c : clients) {
        ParamVector wk = w;
        const int n = static_cast<int>(c->points.size());
        for (int step = 0; step < tau; ++step) {
          // Exact per-iterate moments of the minibatch gradient.
          const Eigen::MatrixXd full = local_gradient(spec, *c, wk);
          double var = 0.0;
          for (const auto& p : c->points)
            var += (point_gradient(spec, wk, p.x, p.label) - full).squaredNorm();
          var /= static_cast<double>(n);
          const double eff_var = batch_size >= n ? 0.0 : var / batch_size;
          max_var[i] = std::max(max_var[i], eff_var);
          max_g2[i] = std::max(max_g2[i], full.squaredNorm() + eff_var);

          Eigen::MatrixXd g;
          if (batch_size >= n) {
            g = full;
          } else {
            g = Eigen::MatrixXd::Zero(w.coef.rows(), w.coef.cols());
            for (int b = 0; b < batch_size; ++b) {
              const auto& p = c->points[uniform_below(rng, static_cast<std::uint64_t>(n))];
              g += point_gradient(spec, wk, p.x, p.label);
            }
            g /= static_cast<double>(batch_size);
          }
          wk.coef -= eta * g;
        }
        agg += c->data_fraction * wk.coef;
      }
      w.coef = agg;
      for (std::size_t h = 0; h < horizons.size(); ++h)
        if (horizons[h] == t + 1)
          gap_at[i][h] = global_loss(spec, clients, w) - optima.f_star;
    }
  });

  BoundExperiment exp;
  exp.constants.smoothness_L = L;
  exp.constants.strong_convexity_mu = mu;
  exp.constants.gradient_bound_G2 =
      1.1 * *std::max_element(max_g2.begin(), max_g2.end());
  exp.constants.gradient_variance =
      1.1 * *std::max_element(max_var.begin(), max_var.end());
  exp.constants.heterogeneity = gamma_het;

  // Skew probes over representative points; a single-task full-participation
  // setup evaluates to exactly 1 everywhere.
  double skew_min = std::numeric_limits<double>::infinity();
  double skew_max = -std::numeric_limits<double>::infinity();
  if (n_clients <= 12) {
    const std::vector<double> losses(scenario.n_tasks(), 1.0);
    for (const ParamVector* probe : {&optima.per_client.front(), &optima.per_client.back()}) {
      try {
        const double rho = selection_skew(scenario, task, *probe, 1.0, losses, optima);
        skew_min = std::min(skew_min, rho);
        skew_max = std::max(skew_max, rho);
      } catch (const UndefinedSkewError&) {
      }
    }
    try {
      const double rho =
          selection_skew(scenario, task, zero_params(spec), 1.0, losses, optima);
      skew_min = std::min(skew_min, rho);
      skew_max = std::max(skew_max, rho);
    } catch (const UndefinedSkewError&) {
    }
  }
  if (!std::isfinite(skew_min) || !std::isfinite(skew_max)) {
    skew_min = 1.0;
    skew_max = 1.0;
  }
  exp.constants.skew_lower = std::min(skew_min, 1.0);
  exp.constants.skew_upper = std::max(skew_max, exp.constants.skew_lower);
  exp.constants.validate();

  exp.w0_distance_sq = zero_params(spec).squared_distance(optima.global);
  exp.schedule_gamma = schedule_gamma;
  exp.tau = tau;
  exp.batch_size = batch_size;
  exp.n_seeds = n_seeds;

  for (std::size_t h = 0; h < horizons.size(); ++h) {
    BoundCheckpoint cp;
    cp.horizon_T = horizons[h];
    double mean = 0.0;
    for (int i = 0; i < n_seeds; ++i) mean += gap_at[i][h];
    cp.mean_gap = mean / n_seeds;
    BoundInputs in;
    in.tau = tau;
    in.schedule_gamma = schedule_gamma;
    in.horizon_T = horizons[h];
    in.w0_distance_sq = exp.w0_distance_sq;
    cp.bound = bound_rhs(BoundKind::kTrainingError, exp.constants, in);
    exp.checkpoints.push_back(cp);
  }
  return exp;
}

}  // namespace mmfl
