#include "mmfl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace mmfl {

namespace {

void check_spec(const TaskSpec& spec) {
  if (spec.input_dim < 1) throw DomainError("TaskSpec: input_dim must be >= 1");
  if (spec.n_classes < 2) throw DomainError("TaskSpec: n_classes must be >= 2");
  if (spec.difficulty <= 0.0) throw DomainError("TaskSpec: difficulty must be positive");
}

void check_shapes(const TaskSpec& spec, const ParamVector& w, const Eigen::VectorXd& x) {
  if (w.coef.rows() != spec.n_classes || w.coef.cols() != spec.input_dim + 1)
    throw ShapeError("parameter matrix does not match task dimensions");
  if (x.size() != spec.input_dim) throw ShapeError("feature vector does not match input_dim");
}

Eigen::VectorXd augmented(const Eigen::VectorXd& x) {
  Eigen::VectorXd xa(x.size() + 1);
  xa.head(x.size()) = x;
  xa(x.size()) = 1.0;
  return xa;
}

// Content key for the per-task data substream: tasks with equal fields draw
// identical data wherever they appear.
std::uint64_t spec_stream_key(const TaskSpec& spec) {
  std::uint64_t h = splitmix64(static_cast<std::uint64_t>(spec.input_dim));
  h = splitmix64(h ^ static_cast<std::uint64_t>(spec.n_classes));
  h = splitmix64(h ^ static_cast<std::uint64_t>(spec.loss_kind == LossKind::kLogistic ? 1 : 2));
  std::uint64_t bits = 0;
  static_assert(sizeof(double) == sizeof(std::uint64_t));
  std::memcpy(&bits, &spec.difficulty, sizeof(bits));
  return splitmix64(h ^ bits);
}

int sample_class(Rng& rng, int n_classes) {
  return static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n_classes)));
}

}  // namespace

double label_noise_rate(const TaskSpec& spec) {
  return std::min(0.45, 0.05 * spec.difficulty);
}

double ParamVector::squared_distance(const ParamVector& other) const {
  if (coef.rows() != other.coef.rows() || coef.cols() != other.coef.cols())
    throw ShapeError("squared_distance: mismatched parameter shapes");
  return (coef - other.coef).squaredNorm();
}

ParamVector zero_params(const TaskSpec& spec) {
  check_spec(spec);
  ParamVector w;
  w.task_id = spec.task_id;
  w.coef = Eigen::MatrixXd::Zero(spec.n_classes, spec.input_dim + 1);
  return w;
}

Scenario generate_scenario(const std::vector<TaskSpec>& task_specs, int n_clients,
                           std::pair<int, int> points_per_client, double noniid_fraction,
                           std::uint64_t seed, int test_points_per_task) {
  if (task_specs.empty()) throw DomainError("generate_scenario: need at least one task");
  if (n_clients < 1) throw DomainError("generate_scenario: need at least one client");
  if (points_per_client.first < 1 || points_per_client.second < points_per_client.first)
    throw DomainError("generate_scenario: invalid points_per_client range");
  if (noniid_fraction < 0.0 || noniid_fraction > 1.0)
    throw DomainError("generate_scenario: noniid_fraction must lie in [0,1]");
  if (test_points_per_task < 1)
    throw DomainError("generate_scenario: test_points_per_task must be >= 1");
  for (const auto& spec : task_specs) check_spec(spec);

  Scenario scenario;
  scenario.seed = seed;
  scenario.tasks = task_specs;
  scenario.shards.assign(n_clients, {});
  for (auto& row : scenario.shards) row.resize(task_specs.size());
  scenario.test_sets.resize(task_specs.size());

  for (std::size_t s = 0; s < task_specs.size(); ++s) {
    const TaskSpec& spec = task_specs[s];
    const int dim = spec.input_dim;
    const int n_classes = spec.n_classes;
    const double noise = label_noise_rate(spec);
    const std::uint64_t task_seed = splitmix64(seed) ^ spec_stream_key(spec);

    Rng truth_rng = make_rng(task_seed, 0);
    Eigen::MatrixXd truth(n_classes, dim + 1);
    for (int r = 0; r < n_classes; ++r) {
      for (int c = 0; c < dim; ++c) truth(r, c) = gaussian(truth_rng);
      truth(r, dim) = 0.1 * gaussian(truth_rng);
    }

    auto draw_point = [&](Rng& rng, const std::vector<int>* allowed) {
      DataPoint p;
      constexpr int kMaxAttempts = 10000;
      for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Eigen::VectorXd x(dim);
        for (int c = 0; c < dim; ++c) x(c) = gaussian(rng);
        Eigen::VectorXd scores = truth * augmented(x);
        int label = 0;
        for (int c = 1; c < n_classes; ++c)
          if (scores(c) > scores(label)) label = c;
        if (allowed && std::find(allowed->begin(), allowed->end(), label) == allowed->end())
          continue;
        if (noise > 0.0 && uniform01(rng) < noise) {
          if (allowed) {
            if (allowed->size() > 1) {
              int pick;
              do {
                pick = (*allowed)[uniform_below(rng, allowed->size())];
              } while (pick == label);
              label = pick;
            }
          } else {
            int pick;
            do {
              pick = sample_class(rng, n_classes);
            } while (pick == label);
            label = pick;
          }
        }
        p.x = std::move(x);
        p.label = label;
        return p;
      }
      throw Error("generate_scenario: label rejection did not terminate; "
                  "the restricted classes appear unreachable for this task seed");
    };

    Rng test_rng = make_rng(task_seed, 1);
    scenario.test_sets[s].points.reserve(test_points_per_task);
    for (int i = 0; i < test_points_per_task; ++i)
      scenario.test_sets[s].points.push_back(draw_point(test_rng, nullptr));

    double total_points = 0.0;
    for (int k = 0; k < n_clients; ++k) {
      Rng client_rng = make_rng(task_seed, 2 + static_cast<std::uint64_t>(k));
      ClientDataset shard;
      shard.client_id = k;
      shard.task_id = spec.task_id;
      const int span = points_per_client.second - points_per_client.first + 1;
      const int n_points =
          points_per_client.first + static_cast<int>(uniform_below(client_rng, span));

      std::vector<int> allowed_storage;
      const std::vector<int>* allowed = nullptr;
      if (uniform01(client_rng) < noniid_fraction) {
        std::vector<int> classes(n_classes);
        std::iota(classes.begin(), classes.end(), 0);
        const int keep = (n_classes + 1) / 2;
        for (int i = 0; i < keep; ++i) {
          const int j = i + static_cast<int>(uniform_below(client_rng, classes.size() - i));
          std::swap(classes[i], classes[j]);
        }
        allowed_storage.assign(classes.begin(), classes.begin() + keep);
        std::sort(allowed_storage.begin(), allowed_storage.end());
        allowed = &allowed_storage;
      }

      shard.points.reserve(n_points);
      for (int i = 0; i < n_points; ++i) shard.points.push_back(draw_point(client_rng, allowed));
      total_points += n_points;
      scenario.shards[k][s] = std::move(shard);
    }
    for (int k = 0; k < n_clients; ++k)
      scenario.shards[k][s].data_fraction = scenario.shards[k][s].points.size() / total_points;
  }
  return scenario;
}

double point_loss(const TaskSpec& spec, const ParamVector& w, const Eigen::VectorXd& x,
                  int label) {
  check_shapes(spec, w, x);
  if (label < 0 || label >= spec.n_classes) throw DomainError("point_loss: label out of range");
  const Eigen::VectorXd z = w.coef * augmented(x);
  if (spec.loss_kind == LossKind::kLeastSquares) {
    Eigen::VectorXd r = z;
    r(label) -= 1.0;
    return 0.5 * r.squaredNorm();
  }
  const double zmax = z.maxCoeff();
  const double lse = zmax + std::log((z.array() - zmax).exp().sum());
  return lse - z(label);
}

Eigen::MatrixXd point_gradient(const TaskSpec& spec, const ParamVector& w,
                               const Eigen::VectorXd& x, int label) {
  check_shapes(spec, w, x);
  if (label < 0 || label >= spec.n_classes)
    throw DomainError("point_gradient: label out of range");
  const Eigen::VectorXd xa = augmented(x);
  const Eigen::VectorXd z = w.coef * xa;
  Eigen::VectorXd r;
  if (spec.loss_kind == LossKind::kLeastSquares) {
    r = z;
    r(label) -= 1.0;
  } else {
    const double zmax = z.maxCoeff();
    Eigen::VectorXd p = (z.array() - zmax).exp();
    p /= p.sum();
    r = p;
    r(label) -= 1.0;
  }
  return r * xa.transpose();
}

double local_loss(const TaskSpec& spec, const ClientDataset& client, const ParamVector& w) {
  if (client.points.empty()) throw DomainError("local_loss: client shard is empty");
  double sum = 0.0;
  for (const auto& p : client.points) sum += point_loss(spec, w, p.x, p.label);
  return sum / static_cast<double>(client.points.size());
}

Eigen::MatrixXd local_gradient(const TaskSpec& spec, const ClientDataset& client,
                               const ParamVector& w) {
  if (client.points.empty()) throw DomainError("local_gradient: client shard is empty");
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(w.coef.rows(), w.coef.cols());
  for (const auto& p : client.points) g += point_gradient(spec, w, p.x, p.label);
  return g / static_cast<double>(client.points.size());
}

double global_loss(const TaskSpec& spec, const std::vector<const ClientDataset*>& clients,
                   const ParamVector& w) {
  if (clients.empty()) throw DomainError("global_loss: no clients");
  double sum = 0.0;
  for (const ClientDataset* c : clients) sum += c->data_fraction * local_loss(spec, *c, w);
  return sum;
}

double global_loss(const TaskSpec& spec, const std::vector<ClientDataset>& clients,
                   const ParamVector& w) {
  std::vector<const ClientDataset*> ptrs;
  ptrs.reserve(clients.size());
  for (const auto& c : clients) ptrs.push_back(&c);
  return global_loss(spec, ptrs, w);
}

ParamVector local_sgd(const TaskSpec& spec, const ClientDataset& client, const ParamVector& w,
                      int tau, double lr, int batch_size, Rng& rng) {
  if (tau < 1) throw DomainError("local_sgd: tau must be >= 1");
  if (batch_size < 1) throw DomainError("local_sgd: batch_size must be >= 1");
  if (client.points.empty()) throw DomainError("local_sgd: client shard is empty");
  check_shapes(spec, w, client.points.front().x);

  const int n = static_cast<int>(client.points.size());
  ParamVector out = w;
  for (int step = 0; step < tau; ++step) {
    Eigen::MatrixXd g;
    if (batch_size >= n) {
      g = local_gradient(spec, client, out);
    } else {
      g = Eigen::MatrixXd::Zero(out.coef.rows(), out.coef.cols());
      for (int b = 0; b < batch_size; ++b) {
        const auto& p = client.points[uniform_below(rng, static_cast<std::uint64_t>(n))];
        g += point_gradient(spec, out, p.x, p.label);
      }
      g /= static_cast<double>(batch_size);
    }
    out.coef -= lr * g;
    if (!out.coef.allFinite())
      throw NumericError("local_sgd: non-finite parameters at step " + std::to_string(step),
                         step);
  }
  return out;
}

int predict(const TaskSpec& spec, const ParamVector& w, const Eigen::VectorXd& x) {
  check_shapes(spec, w, x);
  const Eigen::VectorXd z = w.coef * augmented(x);
  int best = 0;
  for (int c = 1; c < spec.n_classes; ++c)
    if (z(c) > z(best)) best = c;
  return best;
}

double evaluate_accuracy(const TaskSpec& spec, const Dataset& test, const ParamVector& w) {
  if (test.points.empty()) throw DomainError("evaluate_accuracy: empty test set");
  int correct = 0;
  for (const auto& p : test.points)
    if (predict(spec, w, p.x) == p.label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(test.points.size());
}

double test_loss(const TaskSpec& spec, const Dataset& test, const ParamVector& w) {
  if (test.points.empty()) throw DomainError("test_loss: empty test set");
  double sum = 0.0;
  for (const auto& p : test.points) sum += point_loss(spec, w, p.x, p.label);
  return sum / static_cast<double>(test.points.size());
}

}  // namespace mmfl
