#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mmfl/fedtrain.hpp"

using namespace mmfl;

namespace {

std::vector<TaskSpec> one_task(LossKind kind, int dim = 3, int classes = 3) {
  TaskSpec spec;
  spec.task_id = 0;
  spec.difficulty = 1.0;
  spec.input_dim = dim;
  spec.n_classes = classes;
  spec.loss_kind = kind;
  return {spec};
}

TrainingConfig basic_config(int rounds, double participation = 1.0) {
  TrainingConfig config;
  config.tau = 1;
  config.batch_size = 100000;  // full batch
  config.lr.kind = LrSchedule::Kind::kConstant;
  config.lr.eta = 0.05;
  config.rounds = rounds;
  config.participation = participation;
  return config;
}

AllocationPolicy alpha_policy(double alpha) {
  AllocationPolicy p;
  p.kind = PolicyKind::kAlphaFair;
  p.alpha = alpha;
  return p;
}

}  // namespace

TEST_CASE("learning rate schedules") {
  LrSchedule constant;
  constant.kind = LrSchedule::Kind::kConstant;
  constant.eta = 0.3;
  CHECK(constant.at(0) == doctest::Approx(0.3));
  CHECK(constant.at(100) == doctest::Approx(0.3));

  LrSchedule decay;
  decay.kind = LrSchedule::Kind::kDecaying;
  decay.mu = 2.0;
  decay.gamma = 3.0;
  CHECK(decay.at(0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(decay.at(7) == doctest::Approx(1.0 / 20.0).epsilon(1e-12));
}

TEST_CASE("one full-participation round aggregates the weighted local steps") {
  const auto tasks = one_task(LossKind::kLeastSquares);
  const Scenario scenario = generate_scenario(tasks, 2, {6, 12}, 0.0, 40, 16);
  const TrainingConfig config = basic_config(1);

  GlobalState state = init_state(scenario, 9);
  const ParamVector w0 = state.weights[0];
  run_round(state, scenario, alpha_policy(2.0), config);

  // tau = 1 full batch: local_k = w0 - lr * grad_k; aggregate with data
  // fractions (both clients are always selected when participation is 1).
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(w0.coef.rows(), w0.coef.cols());
  for (int k = 0; k < 2; ++k) {
    const ClientDataset& shard = scenario.shards[k][0];
    const Eigen::MatrixXd local =
        w0.coef - config.lr.eta * local_gradient(tasks[0], shard, w0);
    expected += shard.data_fraction * local;
  }
  CHECK((state.weights[0].coef - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tasks with an empty selection keep parameters bit for bit") {
  TaskSpec a = one_task(LossKind::kLogistic)[0];
  TaskSpec b = a;
  b.task_id = 1;
  b.input_dim = 5;
  const Scenario scenario = generate_scenario({a, b}, 2, {5, 8}, 0.0, 3, 10);

  AllocationPolicy policy;
  policy.kind = PolicyKind::kRoundRobin;
  TrainingConfig config = basic_config(1, 0.5);  // one active client

  GlobalState state = init_state(scenario, 12);
  const RoundMetrics m = run_round(state, scenario, policy, config);
  REQUIRE(m.n_active == 1);
  REQUIRE(m.n_selected[0] == 1);  // round robin sends the only client to task 0
  REQUIRE(m.n_selected[1] == 0);
  const ParamVector zero = zero_params(b);
  CHECK(state.weights[1].coef == zero.coef);  // untouched, exact equality
  CHECK(state.weights[0].coef != zero_params(a).coef);
}

TEST_CASE("training is deterministic in the seed") {
  const auto tasks = one_task(LossKind::kLogistic);
  const Scenario scenario = generate_scenario(tasks, 8, {5, 10}, 0.5, 21, 20);
  TrainingConfig config = basic_config(5, 0.5);
  config.batch_size = 4;  // stochastic path

  const TrainingResult r1 = run_training(scenario, alpha_policy(3.0), config, 100);
  const TrainingResult r2 = run_training(scenario, alpha_policy(3.0), config, 100);
  std::ostringstream csv1, csv2;
  write_metrics_csv(csv1, r1.rounds);
  write_metrics_csv(csv2, r2.rounds);
  CHECK(csv1.str() == csv2.str());
  CHECK(r1.final_weights[0].coef == r2.final_weights[0].coef);

  const TrainingResult r3 = run_training(scenario, alpha_policy(3.0), config, 101);
  CHECK(r1.final_weights[0].coef != r3.final_weights[0].coef);
}

TEST_CASE("every active client is selected for exactly one task") {
  TaskSpec a = one_task(LossKind::kLogistic)[0];
  TaskSpec b = a;
  b.task_id = 1;
  const Scenario scenario = generate_scenario({a, b}, 10, {4, 8}, 0.0, 8, 10);
  TrainingConfig config = basic_config(6, 0.5);
  const TrainingResult r = run_training(scenario, alpha_policy(2.0), config, 5);
  for (const RoundMetrics& m : r.rounds) {
    CHECK(m.n_active == 5);
    CHECK(m.n_selected[0] + m.n_selected[1] == m.n_active);
  }
}

TEST_CASE("zero rounds return an empty result") {
  const auto tasks = one_task(LossKind::kLogistic);
  const Scenario scenario = generate_scenario(tasks, 3, {4, 6}, 0.0, 2, 8);
  TrainingConfig config = basic_config(0);
  const TrainingResult r = run_training(scenario, alpha_policy(1.0), config, 1);
  CHECK(r.rounds.empty());
  CHECK(r.cumulative_selected == std::vector<long>{0});
  CHECK(r.final_weights[0].coef == zero_params(tasks[0]).coef);
}

TEST_CASE("full-batch training on least squares decreases the loss every round") {
  const auto tasks = one_task(LossKind::kLeastSquares, 3, 3);
  const Scenario scenario = generate_scenario(tasks, 4, {10, 15}, 0.0, 14, 10);
  TrainingConfig config = basic_config(40);
  const TrainingResult r = run_training(scenario, alpha_policy(1.0), config, 4);
  for (std::size_t t = 1; t < r.rounds.size(); ++t)
    CHECK(r.rounds[t].loss[0] <= r.rounds[t - 1].loss[0] + 1e-12);
}

TEST_CASE("signals track the configured mode") {
  const auto tasks = one_task(LossKind::kLogistic);
  const Scenario scenario = generate_scenario(tasks, 3, {5, 8}, 0.0, 6, 12);
  TrainingConfig config = basic_config(1);

  AllocationPolicy err = alpha_policy(2.0);
  err.signal = SignalMode::kErrorRate;
  GlobalState se = init_state(scenario, 2);
  const RoundMetrics me = run_round(se, scenario, err, config);
  CHECK(se.signal_history[0].back() == doctest::Approx(1.0 - me.accuracy[0]).epsilon(1e-15));

  AllocationPolicy lp = alpha_policy(2.0);
  lp.signal = SignalMode::kLoss;
  GlobalState sl = init_state(scenario, 2);
  run_round(sl, scenario, lp, config);
  CHECK(sl.signal_history[0].back() ==
        doctest::Approx(test_loss(tasks[0], scenario.test_sets[0], sl.weights[0]))
            .epsilon(1e-12));
}

TEST_CASE("qfel scales the aggregate update by the fairness weight") {
  TaskSpec a = one_task(LossKind::kLeastSquares)[0];
  TaskSpec b = a;
  b.task_id = 1;
  b.input_dim = 5;
  const Scenario scenario = generate_scenario({a, b}, 1, {6, 6}, 0.0, 31, 12);

  AllocationPolicy policy;
  policy.kind = PolicyKind::kQfelAdapted;
  policy.q = 2.0;
  TrainingConfig config = basic_config(2);

  GlobalState state = init_state(scenario, 77);
  const RoundMetrics m0 = run_round(state, scenario, policy, config);
  std::vector<ParamVector> w1 = state.weights;
  const RoundMetrics m1 = run_round(state, scenario, policy, config);

  // Reconstruct the second round's update. Signals come from round 0.
  std::vector<double> signals = {std::max(1.0 - m0.accuracy[0], 1e-6),
                                 std::max(1.0 - m0.accuracy[1], 1e-6)};
  const std::vector<double> scale = qfel_update_scale(signals, policy.q);
  for (int s = 0; s < 2; ++s) {
    if (m1.n_selected[s] == 0) {
      CHECK(state.weights[s].coef == w1[s].coef);
      continue;
    }
    const TaskSpec& spec = scenario.tasks[s];
    const Eigen::MatrixXd local =
        w1[s].coef - config.lr.eta * local_gradient(spec, scenario.shards[0][s], w1[s]);
    const Eigen::MatrixXd expected = w1[s].coef + scale[s] * (local - w1[s].coef);
    CHECK((state.weights[s].coef - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("recruitment restricts assignment and fractional winners flip coins") {
  TaskSpec a = one_task(LossKind::kLogistic)[0];
  TaskSpec b = a;
  b.task_id = 1;
  const Scenario scenario = generate_scenario({a, b}, 2, {4, 6}, 0.0, 13, 8);

  SUBCASE("zero participation excludes the task entirely") {
    Recruitment recruitment;
    recruitment.participation_x = {{1.0, 0.0}, {1.0, 0.0}};
    TrainingConfig config = basic_config(25);
    const TrainingResult r =
        run_training(scenario, alpha_policy(2.0), config, 3, &recruitment);
    for (const RoundMetrics& m : r.rounds) {
      CHECK(m.n_selected[1] == 0);
      CHECK(m.n_selected[0] == 2);
    }
  }

  SUBCASE("fractional participation approximates its rate") {
    Recruitment recruitment;
    recruitment.participation_x = {{1.0, 0.0}, {0.5, 0.0}};
    TrainingConfig config = basic_config(600);
    const TrainingResult r =
        run_training(scenario, alpha_policy(2.0), config, 3, &recruitment);
    long joined = 0;
    for (const RoundMetrics& m : r.rounds) joined += m.n_selected[0];
    // Client 0 always joins task 0; client 1 joins with probability 0.5.
    const double mean = 600.0 + 600.0 * 0.5;
    const double sigma = std::sqrt(600.0 * 0.25);
    CHECK(std::abs(joined - mean) < 4.0 * sigma);
  }
}

TEST_CASE("metrics CSV uses the frozen schema and formatting") {
  RoundMetrics m;
  m.round = 0;
  m.loss = {0.123456789012345, 2.0};
  m.accuracy = {1.0 / 3.0, 1.0};
  m.n_selected = {5, 0};
  m.n_active = 5;
  RoundMetrics m2 = m;
  m2.round = 1;
  std::ostringstream out;
  write_metrics_csv(out, {m, m2});
  CHECK(out.str() ==
        "round,task_id,loss,accuracy,n_selected\n"
        "0,0,0.123456789012,0.333333333333,5\n"
        "0,1,2,1,0\n"
        "1,0,0.123456789012,0.333333333333,5\n"
        "1,1,2,1,0\n");
}

TEST_CASE("run summary reports fairness aggregates") {
  const auto tasks = one_task(LossKind::kLogistic);
  const Scenario scenario = generate_scenario(tasks, 3, {4, 6}, 0.0, 2, 10);
  const TrainingResult r = run_training(scenario, alpha_policy(1.0), basic_config(3), 8);
  const nlohmann::json j = run_summary(r, 8);
  CHECK(j.at("seed").get<int>() == 8);
  CHECK(j.at("rounds").get<int>() == 3);
  CHECK(j.at("final_accuracy").size() == 1);
  CHECK(j.at("min_accuracy").get<double>() ==
        doctest::Approx(j.at("final_accuracy")[0].get<double>()));
  CHECK(j.at("accuracy_variance").get<double>() == doctest::Approx(0.0));
  CHECK(j.at("cumulative_selected")[0].get<long>() == 9);
}

TEST_CASE("training config validation") {
  const auto tasks = one_task(LossKind::kLogistic);
  const Scenario scenario = generate_scenario(tasks, 3, {4, 6}, 0.0, 2, 10);
  TrainingConfig config = basic_config(1);
  config.tau = 0;
  CHECK_THROWS_AS(run_training(scenario, alpha_policy(1.0), config, 1), ConfigError);
  config = basic_config(1);
  config.batch_size = 0;
  CHECK_THROWS_AS(run_training(scenario, alpha_policy(1.0), config, 1), ConfigError);
  config = basic_config(1);
  config.participation = 0.0;
  CHECK_THROWS_AS(run_training(scenario, alpha_policy(1.0), config, 1), ConfigError);
  config = basic_config(1);
  config.participation = 1.5;
  CHECK_THROWS_AS(run_training(scenario, alpha_policy(1.0), config, 1), ConfigError);
  config = basic_config(-1);
  CHECK_THROWS_AS(run_training(scenario, alpha_policy(1.0), config, 1), ConfigError);
}
