#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "mmfl/common.hpp"

namespace mmfl {

enum class LossKind { kLogistic, kLeastSquares };

// One training task. difficulty controls the generator's label-noise rate:
// noise = min(0.45, 0.05 * difficulty).
struct TaskSpec {
  int task_id = 0;
  double difficulty = 1.0;
  int input_dim = 2;
  int n_classes = 2;
  LossKind loss_kind = LossKind::kLogistic;
};

double label_noise_rate(const TaskSpec& spec);

struct DataPoint {
  Eigen::VectorXd x;
  int label = 0;
};

struct Dataset {
  std::vector<DataPoint> points;
};

// A client's local shard for one task. data_fraction is this shard's share of
// the task's total points across all clients.
struct ClientDataset {
  int client_id = 0;
  int task_id = 0;
  std::vector<DataPoint> points;
  double data_fraction = 0.0;
};

// Linear model parameters for one task: coef is n_classes x (input_dim + 1)
// with the bias in the last column.
struct ParamVector {
  Eigen::MatrixXd coef;
  int task_id = 0;

  double squared_distance(const ParamVector& other) const;
};

ParamVector zero_params(const TaskSpec& spec);

struct Scenario {
  std::vector<TaskSpec> tasks;
  // shards[k][s]: client k's dataset for task s.
  std::vector<std::vector<ClientDataset>> shards;
  std::vector<Dataset> test_sets;  // server-held, one per task
  std::uint64_t seed = 0;

  int n_clients() const { return static_cast<int>(shards.size()); }
  int n_tasks() const { return static_cast<int>(tasks.size()); }
};

// Draws every client's shard for every task plus a per-task server test set.
// The per-task substream is keyed on the TaskSpec's content, so tasks with
// equal fields see identical data regardless of position or composition.
Scenario generate_scenario(const std::vector<TaskSpec>& task_specs, int n_clients,
                           std::pair<int, int> points_per_client, double noniid_fraction,
                           std::uint64_t seed, int test_points_per_task = 256);

double point_loss(const TaskSpec& spec, const ParamVector& w, const Eigen::VectorXd& x, int label);
Eigen::MatrixXd point_gradient(const TaskSpec& spec, const ParamVector& w, const Eigen::VectorXd& x,
                               int label);

// Mean loss over the client's shard.
double local_loss(const TaskSpec& spec, const ClientDataset& client, const ParamVector& w);

// Mean gradient over the whole shard.
Eigen::MatrixXd local_gradient(const TaskSpec& spec, const ClientDataset& client,
                               const ParamVector& w);

// Task objective: sum of data_fraction-weighted local losses.
double global_loss(const TaskSpec& spec, const std::vector<const ClientDataset*>& clients,
                   const ParamVector& w);
double global_loss(const TaskSpec& spec, const std::vector<ClientDataset>& clients,
                   const ParamVector& w);

// tau minibatch SGD steps from w. Batches are drawn uniformly with
// replacement; batch_size >= |shard| runs deterministic full-batch steps.
ParamVector local_sgd(const TaskSpec& spec, const ClientDataset& client, const ParamVector& w,
                      int tau, double lr, int batch_size, Rng& rng);

// Argmax class; ties resolve to the lowest class index.
int predict(const TaskSpec& spec, const ParamVector& w, const Eigen::VectorXd& x);

double evaluate_accuracy(const TaskSpec& spec, const Dataset& test, const ParamVector& w);

// Mean loss on the server-held test set.
double test_loss(const TaskSpec& spec, const Dataset& test, const ParamVector& w);

}  // namespace mmfl
