#include "mmfl/harness.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "mmfl/analysis.hpp"

namespace fs = std::filesystem;

namespace mmfl {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void expect_keys(const nlohmann::json& j, const std::string& where,
                 const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
  }
}

double require_number(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  if (!j.at(key).is_number()) throw ConfigError(where + ": key '" + key + "' must be a number");
  return j.at(key).get<double>();
}

int require_int(const nlohmann::json& j, const std::string& where, const std::string& key) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  if (!j.at(key).is_number_integer())
    throw ConfigError(where + ": key '" + key + "' must be an integer");
  return j.at(key).get<int>();
}

std::string require_string(const nlohmann::json& j, const std::string& where,
                           const std::string& key) {
  if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  if (!j.at(key).is_string()) throw ConfigError(where + ": key '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

TaskSpec task_from_json(const nlohmann::json& j, int index) {
  const std::string where = "tasks[" + std::to_string(index) + "]";
  expect_keys(j, where, {"task_id", "difficulty", "input_dim", "n_classes", "loss_kind"});
  TaskSpec spec;
  spec.task_id = j.contains("task_id") ? require_int(j, where, "task_id") : index;
  spec.difficulty = require_number(j, where, "difficulty");
  spec.input_dim = require_int(j, where, "input_dim");
  spec.n_classes = require_int(j, where, "n_classes");
  const std::string kind = require_string(j, where, "loss_kind");
  if (kind == "logistic")
    spec.loss_kind = LossKind::kLogistic;
  else if (kind == "least_squares")
    spec.loss_kind = LossKind::kLeastSquares;
  else
    throw ConfigError(where + ": loss_kind must be 'logistic' or 'least_squares'");
  if (spec.difficulty <= 0.0) throw ConfigError(where + ": difficulty must be positive");
  if (spec.input_dim < 1) throw ConfigError(where + ": input_dim must be >= 1");
  if (spec.n_classes < 2) throw ConfigError(where + ": n_classes must be >= 2");
  return spec;
}

nlohmann::json task_to_json(const TaskSpec& spec) {
  nlohmann::json j;
  j["task_id"] = spec.task_id;
  j["difficulty"] = spec.difficulty;
  j["input_dim"] = spec.input_dim;
  j["n_classes"] = spec.n_classes;
  j["loss_kind"] = spec.loss_kind == LossKind::kLogistic ? "logistic" : "least_squares";
  return j;
}

LrSchedule lr_from_json(const nlohmann::json& j) {
  expect_keys(j, "training.lr", {"kind", "eta", "mu", "gamma"});
  LrSchedule lr;
  const std::string kind = require_string(j, "training.lr", "kind");
  if (kind == "constant") {
    lr.kind = LrSchedule::Kind::kConstant;
    lr.eta = require_number(j, "training.lr", "eta");
    if (!(lr.eta >= 0.0)) throw ConfigError("training.lr: eta must be >= 0");
  } else if (kind == "decaying") {
    lr.kind = LrSchedule::Kind::kDecaying;
    lr.mu = require_number(j, "training.lr", "mu");
    lr.gamma = require_number(j, "training.lr", "gamma");
    if (!(lr.mu > 0.0) || !(lr.gamma > 0.0))
      throw ConfigError("training.lr: decaying schedule needs mu > 0 and gamma > 0");
  } else {
    throw ConfigError("training.lr: kind must be 'constant' or 'decaying'");
  }
  return lr;
}

nlohmann::json lr_to_json(const LrSchedule& lr) {
  nlohmann::json j;
  if (lr.kind == LrSchedule::Kind::kConstant) {
    j["kind"] = "constant";
    j["eta"] = lr.eta;
  } else {
    j["kind"] = "decaying";
    j["mu"] = lr.mu;
    j["gamma"] = lr.gamma;
  }
  return j;
}

PolicyConfig policy_from_json(const nlohmann::json& j, int index) {
  const std::string where = "policies[" + std::to_string(index) + "]";
  expect_keys(j, where, {"name", "kind", "alpha", "q", "signal"});
  PolicyConfig pc;
  const std::string kind = require_string(j, where, "kind");
  if (kind == "alpha_fair") {
    pc.policy.kind = PolicyKind::kAlphaFair;
    pc.policy.alpha = require_number(j, where, "alpha");
    if (!(pc.policy.alpha >= 1.0)) throw ConfigError(where + ": alpha must be >= 1");
  } else if (kind == "random") {
    pc.policy.kind = PolicyKind::kRandom;
  } else if (kind == "round_robin") {
    pc.policy.kind = PolicyKind::kRoundRobin;
  } else if (kind == "qfel") {
    pc.policy.kind = PolicyKind::kQfelAdapted;
    pc.policy.q = require_number(j, where, "q");
    if (!(pc.policy.q >= 0.0)) throw ConfigError(where + ": q must be >= 0");
  } else {
    throw ConfigError(where +
                      ": kind must be one of alpha_fair, random, round_robin, qfel");
  }
  if (j.contains("signal")) {
    const std::string signal = require_string(j, where, "signal");
    if (signal == "loss")
      pc.policy.signal = SignalMode::kLoss;
    else if (signal == "error_rate")
      pc.policy.signal = SignalMode::kErrorRate;
    else
      throw ConfigError(where + ": signal must be 'loss' or 'error_rate'");
  }
  if (j.contains("name")) {
    pc.name = require_string(j, where, "name");
  } else {
    switch (pc.policy.kind) {
      case PolicyKind::kAlphaFair: {
        std::ostringstream os;
        os << "alpha_fair_a" << pc.policy.alpha;
        pc.name = os.str();
        break;
      }
      case PolicyKind::kRandom: pc.name = "random"; break;
      case PolicyKind::kRoundRobin: pc.name = "round_robin"; break;
      case PolicyKind::kQfelAdapted: {
        std::ostringstream os;
        os << "qfel_q" << pc.policy.q;
        pc.name = os.str();
        break;
      }
    }
  }
  return pc;
}

nlohmann::json policy_to_json(const PolicyConfig& pc) {
  nlohmann::json j;
  j["name"] = pc.name;
  switch (pc.policy.kind) {
    case PolicyKind::kAlphaFair:
      j["kind"] = "alpha_fair";
      j["alpha"] = pc.policy.alpha;
      break;
    case PolicyKind::kRandom: j["kind"] = "random"; break;
    case PolicyKind::kRoundRobin: j["kind"] = "round_robin"; break;
    case PolicyKind::kQfelAdapted:
      j["kind"] = "qfel";
      j["q"] = pc.policy.q;
      break;
  }
  j["signal"] = pc.policy.signal == SignalMode::kLoss ? "loss" : "error_rate";
  return j;
}

AuctionConfig auction_from_json(const nlohmann::json& j, int n_tasks) {
  expect_keys(j, "auction",
              {"mode", "mechanisms", "budget", "budget_grid", "n_users", "bid_distributions"});
  AuctionConfig ac;
  const std::string mode = require_string(j, "auction", "mode");
  if (mode == "recruit")
    ac.mode = AuctionConfig::Mode::kRecruit;
  else if (mode == "sweep")
    ac.mode = AuctionConfig::Mode::kSweep;
  else
    throw ConfigError("auction: mode must be 'recruit' or 'sweep'");

  if (!j.contains("mechanisms") || !j.at("mechanisms").is_array() || j.at("mechanisms").empty())
    throw ConfigError("auction: mechanisms must be a non-empty array");
  for (const auto& m : j.at("mechanisms")) {
    if (!m.is_string()) throw ConfigError("auction: mechanisms entries must be strings");
    ac.mechanisms.push_back(mechanism_from_string(m.get<std::string>()));
  }

  if (ac.mode == AuctionConfig::Mode::kRecruit) {
    ac.budget = require_number(j, "auction", "budget");
    if (!(ac.budget > 0.0)) throw ConfigError("auction: budget must be positive");
    if (j.contains("budget_grid")) throw ConfigError("auction: budget_grid is for sweep mode");
  } else {
    if (!j.contains("budget_grid") || !j.at("budget_grid").is_array() ||
        j.at("budget_grid").empty())
      throw ConfigError("auction: sweep mode needs a non-empty budget_grid");
    for (const auto& b : j.at("budget_grid")) {
      if (!b.is_number() || !(b.get<double>() > 0.0))
        throw ConfigError("auction: budget_grid entries must be positive numbers");
      ac.budget_grid.push_back(b.get<double>());
    }
    if (j.contains("budget")) throw ConfigError("auction: budget is for recruit mode");
  }
  if (j.contains("n_users")) {
    ac.n_users = require_int(j, "auction", "n_users");
    if (ac.n_users < 1) throw ConfigError("auction: n_users must be >= 1");
  }
  if (!j.contains("bid_distributions") || !j.at("bid_distributions").is_array())
    throw ConfigError("auction: bid_distributions must be an array with one entry per task");
  if (static_cast<int>(j.at("bid_distributions").size()) != n_tasks)
    throw ConfigError("auction: bid_distributions must have one entry per task");
  for (const auto& d : j.at("bid_distributions"))
    ac.bid_distributions.push_back(BidDistribution::from_json(d));
  return ac;
}

nlohmann::json auction_to_json(const AuctionConfig& ac) {
  nlohmann::json j;
  j["mode"] = ac.mode == AuctionConfig::Mode::kRecruit ? "recruit" : "sweep";
  nlohmann::json mechs = nlohmann::json::array();
  for (Mechanism m : ac.mechanisms) mechs.push_back(mechanism_name(m));
  j["mechanisms"] = mechs;
  if (ac.mode == AuctionConfig::Mode::kRecruit)
    j["budget"] = ac.budget;
  else
    j["budget_grid"] = ac.budget_grid;
  if (ac.n_users > 0) j["n_users"] = ac.n_users;
  nlohmann::json dists = nlohmann::json::array();
  for (const auto& d : ac.bid_distributions) dists.push_back(d.to_json());
  j["bid_distributions"] = dists;
  return j;
}

void validate_config(const ScenarioConfig& c) {
  if (c.tasks.empty()) throw ConfigError("config: tasks must be non-empty");
  if (c.n_clients < 1) throw ConfigError("config: n_clients must be >= 1");
  if (c.points_per_client.first < 1 ||
      c.points_per_client.second < c.points_per_client.first)
    throw ConfigError("config: points_per_client must be [lo, hi] with 1 <= lo <= hi");
  if (c.noniid_fraction < 0.0 || c.noniid_fraction > 1.0)
    throw ConfigError("config: noniid_fraction must lie in [0,1]");
  if (c.test_points_per_task < 1)
    throw ConfigError("config: test_points_per_task must be >= 1");
  if (!(c.training.participation > 0.0) || c.training.participation > 1.0)
    throw ConfigError("config: participation must lie in (0,1]");
  if (c.training.tau < 1) throw ConfigError("config: training.tau must be >= 1");
  if (c.training.batch_size < 1) throw ConfigError("config: training.batch_size must be >= 1");
  if (c.training.rounds < 0) throw ConfigError("config: training.rounds must be >= 0");
  if (c.seeds.empty()) throw ConfigError("config: seeds must be non-empty");
  const bool sweep = c.auction && c.auction->mode == AuctionConfig::Mode::kSweep;
  if (!sweep) {
    if (c.policies.empty()) throw ConfigError("config: policies must be non-empty");
    if (c.training.rounds < 1)
      throw ConfigError("config: training.rounds must be >= 1 for training runs");
  }
  if (c.auction && c.auction->mode == AuctionConfig::Mode::kRecruit) {
    for (const auto& pc : c.policies)
      if (pc.policy.kind == PolicyKind::kRoundRobin)
        throw ConfigError("config: round_robin cannot run under auction recruitment");
  }
  std::set<std::string> names;
  for (const auto& pc : c.policies)
    if (!names.insert(pc.name).second)
      throw ConfigError("config: duplicate policy name '" + pc.name + "'");
  std::set<int> task_ids;
  for (const auto& t : c.tasks)
    if (!task_ids.insert(t.task_id).second)
      throw ConfigError("config: duplicate task_id");
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char ch : name) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.')
      out.push_back(ch);
    else
      out.push_back('_');
  }
  return out.empty() ? "run" : out;
}

}  // namespace

double BidDistribution::sample(Rng& rng) const {
  switch (kind) {
    case Kind::kTruncatedGaussian: {
      for (int attempt = 0; attempt < 100000; ++attempt) {
        const double v = mean + sd * gaussian(rng);
        if (v >= lo && v <= hi) return v;
      }
      throw Error("BidDistribution: truncated gaussian rejection did not terminate");
    }
    case Kind::kIncreasingLinear:
      // Density rising linearly from lo to hi.
      return lo + (hi - lo) * std::sqrt(uniform01(rng));
    case Kind::kUniform:
      return lo + (hi - lo) * uniform01(rng);
    case Kind::kExponential:
      return -std::log1p(-uniform01(rng)) / rate;
  }
  throw DomainError("BidDistribution: bad kind enum");
}

BidDistribution BidDistribution::from_json(const nlohmann::json& j) {
  expect_keys(j, "bid_distribution", {"kind", "mean", "sd", "lo", "hi", "rate"});
  BidDistribution d;
  const std::string kind = require_string(j, "bid_distribution", "kind");
  if (kind == "truncated_gaussian")
    d.kind = Kind::kTruncatedGaussian;
  else if (kind == "increasing_linear")
    d.kind = Kind::kIncreasingLinear;
  else if (kind == "uniform")
    d.kind = Kind::kUniform;
  else if (kind == "exponential")
    d.kind = Kind::kExponential;
  else
    throw ConfigError("bid_distribution: unknown kind '" + kind + "'");

  if (j.contains("mean")) d.mean = require_number(j, "bid_distribution", "mean");
  if (j.contains("sd")) d.sd = require_number(j, "bid_distribution", "sd");
  if (j.contains("lo")) d.lo = require_number(j, "bid_distribution", "lo");
  if (j.contains("hi")) d.hi = require_number(j, "bid_distribution", "hi");
  if (j.contains("rate")) d.rate = require_number(j, "bid_distribution", "rate");

  if (d.kind == Kind::kExponential) {
    if (!(d.rate > 0.0)) throw ConfigError("bid_distribution: rate must be positive");
  } else {
    if (!(d.hi > d.lo)) throw ConfigError("bid_distribution: need hi > lo");
    if (d.lo < 0.0) throw ConfigError("bid_distribution: bids cannot be negative");
    if (d.kind == Kind::kTruncatedGaussian && !(d.sd > 0.0))
      throw ConfigError("bid_distribution: sd must be positive");
  }
  return d;
}

nlohmann::json BidDistribution::to_json() const {
  nlohmann::json j;
  switch (kind) {
    case Kind::kTruncatedGaussian:
      j["kind"] = "truncated_gaussian";
      j["mean"] = mean;
      j["sd"] = sd;
      j["lo"] = lo;
      j["hi"] = hi;
      break;
    case Kind::kIncreasingLinear:
      j["kind"] = "increasing_linear";
      j["lo"] = lo;
      j["hi"] = hi;
      break;
    case Kind::kUniform:
      j["kind"] = "uniform";
      j["lo"] = lo;
      j["hi"] = hi;
      break;
    case Kind::kExponential:
      j["kind"] = "exponential";
      j["rate"] = rate;
      break;
  }
  return j;
}

BidMatrix sample_bids(const std::vector<BidDistribution>& per_task, int n_users, Rng& rng) {
  if (per_task.empty()) throw DomainError("sample_bids: need at least one distribution");
  if (n_users < 1) throw DomainError("sample_bids: need at least one user");
  BidMatrix m;
  m.bids.assign(n_users, std::vector<double>(per_task.size(), 0.0));
  for (int i = 0; i < n_users; ++i)
    for (std::size_t s = 0; s < per_task.size(); ++s) m.bids[i][s] = per_task[s].sample(rng);
  m.validate();
  return m;
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  expect_keys(j, "config",
              {"name", "tasks", "n_clients", "points_per_client", "noniid_fraction",
               "test_points_per_task", "participation", "training", "policies", "seeds",
               "output_dir", "auction"});
  ScenarioConfig c;
  if (j.contains("name")) c.name = require_string(j, "config", "name");

  if (!j.contains("tasks") || !j.at("tasks").is_array() || j.at("tasks").empty())
    throw ConfigError("config: tasks must be a non-empty array");
  int index = 0;
  for (const auto& t : j.at("tasks")) c.tasks.push_back(task_from_json(t, index++));

  c.n_clients = require_int(j, "config", "n_clients");

  if (!j.contains("points_per_client") || !j.at("points_per_client").is_array() ||
      j.at("points_per_client").size() != 2)
    throw ConfigError("config: points_per_client must be [lo, hi]");
  c.points_per_client = {j.at("points_per_client")[0].get<int>(),
                         j.at("points_per_client")[1].get<int>()};

  if (j.contains("noniid_fraction"))
    c.noniid_fraction = require_number(j, "config", "noniid_fraction");
  if (j.contains("test_points_per_task"))
    c.test_points_per_task = require_int(j, "config", "test_points_per_task");

  c.training.participation = require_number(j, "config", "participation");

  if (!j.contains("training")) throw ConfigError("config: missing key 'training'");
  const auto& tj = j.at("training");
  expect_keys(tj, "training", {"tau", "batch_size", "rounds", "lr"});
  c.training.tau = require_int(tj, "training", "tau");
  c.training.batch_size = require_int(tj, "training", "batch_size");
  c.training.rounds = require_int(tj, "training", "rounds");
  if (!tj.contains("lr")) throw ConfigError("training: missing key 'lr'");
  c.training.lr = lr_from_json(tj.at("lr"));

  if (j.contains("policies")) {
    if (!j.at("policies").is_array()) throw ConfigError("config: policies must be an array");
    int pi = 0;
    for (const auto& p : j.at("policies")) c.policies.push_back(policy_from_json(p, pi++));
  }

  if (!j.contains("seeds") || !j.at("seeds").is_array() || j.at("seeds").empty())
    throw ConfigError("config: seeds must be a non-empty array");
  for (const auto& s : j.at("seeds")) {
    if (!s.is_number_integer() || s.get<long long>() < 0)
      throw ConfigError("config: seeds must be non-negative integers");
    c.seeds.push_back(s.get<std::uint64_t>());
  }

  if (j.contains("output_dir")) c.output_dir = require_string(j, "config", "output_dir");
  if (j.contains("auction"))
    c.auction = auction_from_json(j.at("auction"), static_cast<int>(c.tasks.size()));

  validate_config(c);
  return c;
}

nlohmann::json ScenarioConfig::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  nlohmann::json tasks_json = nlohmann::json::array();
  for (const auto& t : tasks) tasks_json.push_back(task_to_json(t));
  j["tasks"] = tasks_json;
  j["n_clients"] = n_clients;
  j["points_per_client"] = {points_per_client.first, points_per_client.second};
  j["noniid_fraction"] = noniid_fraction;
  j["test_points_per_task"] = test_points_per_task;
  j["participation"] = training.participation;
  j["training"] = {{"tau", training.tau},
                   {"batch_size", training.batch_size},
                   {"rounds", training.rounds},
                   {"lr", lr_to_json(training.lr)}};
  nlohmann::json policies_json = nlohmann::json::array();
  for (const auto& p : policies) policies_json.push_back(policy_to_json(p));
  j["policies"] = policies_json;
  j["seeds"] = seeds;
  if (!output_dir.empty()) j["output_dir"] = output_dir;
  if (auction) j["auction"] = auction_to_json(*auction);
  return j;
}

Recruitment recruitment_from_outcome(const AuctionOutcome& outcome, int n_clients) {
  if (n_clients < 1) throw DomainError("recruitment_from_outcome: need at least one client");
  const int n_tasks = static_cast<int>(outcome.take_up.size());
  Recruitment r;
  r.participation_x.assign(n_clients, std::vector<double>(n_tasks, 0.0));
  const int n_known = std::min<int>(n_clients, static_cast<int>(outcome.x.size()));
  for (int k = 0; k < n_known; ++k) {
    if (static_cast<int>(outcome.x[k].size()) != n_tasks)
      throw ShapeError("recruitment_from_outcome: participation row does not match task count");
    for (int s = 0; s < n_tasks; ++s)
      r.participation_x[k][s] = std::clamp(outcome.x[k][s], 0.0, 1.0);
  }
  return r;
}

namespace {

struct TrainingCell {
  int mechanism = -1;  // index into auction mechanisms, -1 without recruitment
  int policy = 0;
  int seed = 0;
};

void write_file(const fs::path& path, const std::string& content,
                std::vector<std::string>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open output file " + path.string());
  out << content;
  written.push_back(path.string());
}

std::string aggregate_csv(const std::vector<TrainingResult>& results) {
  std::ostringstream os;
  os << "round,task_id,loss_mean,loss_min,loss_max,accuracy_mean,accuracy_min,accuracy_max,"
        "n_selected_mean\n";
  if (results.empty()) return os.str();
  const std::size_t rounds = results.front().rounds.size();
  const std::size_t n_tasks =
      rounds == 0 ? 0 : results.front().rounds.front().loss.size();
  for (std::size_t t = 0; t < rounds; ++t) {
    for (std::size_t s = 0; s < n_tasks; ++s) {
      double loss_mean = 0.0, loss_min = 0.0, loss_max = 0.0;
      double acc_mean = 0.0, acc_min = 0.0, acc_max = 0.0;
      double sel_mean = 0.0;
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& m = results[i].rounds[t];
        const double l = m.loss[s];
        const double a = m.accuracy[s];
        if (i == 0) {
          loss_min = loss_max = l;
          acc_min = acc_max = a;
        } else {
          loss_min = std::min(loss_min, l);
          loss_max = std::max(loss_max, l);
          acc_min = std::min(acc_min, a);
          acc_max = std::max(acc_max, a);
        }
        loss_mean += l;
        acc_mean += a;
        sel_mean += m.n_selected[s];
      }
      const double n = static_cast<double>(results.size());
      os << t << ',' << s << ',' << format_double(loss_mean / n) << ','
         << format_double(loss_min) << ',' << format_double(loss_max) << ','
         << format_double(acc_mean / n) << ',' << format_double(acc_min) << ','
         << format_double(acc_max) << ',' << format_double(sel_mean / n) << '\n';
    }
  }
  return os.str();
}

}  // namespace

std::vector<std::string> preset_names() {
  return {"exp1-desk", "exp2-tasks", "exp3-clients", "exp4-alpha", "exp5-auctions",
          "exp6-pipeline"};
}

ScenarioConfig preset_config(const std::string& name) {
  auto mk_task = [](int id, double difficulty, int dim, int classes) {
    TaskSpec t;
    t.task_id = id;
    t.difficulty = difficulty;
    t.input_dim = dim;
    t.n_classes = classes;
    t.loss_kind = LossKind::kLogistic;
    return t;
  };
  auto alpha_policy = [](double alpha, const std::string& pname) {
    PolicyConfig pc;
    pc.name = pname;
    pc.policy.kind = PolicyKind::kAlphaFair;
    pc.policy.alpha = alpha;
    pc.policy.signal = SignalMode::kErrorRate;
    return pc;
  };
  auto plain_policy = [](PolicyKind kind, const std::string& pname) {
    PolicyConfig pc;
    pc.name = pname;
    pc.policy.kind = kind;
    pc.policy.signal = SignalMode::kErrorRate;
    return pc;
  };

  ScenarioConfig c;
  c.name = name;
  c.training.lr.kind = LrSchedule::Kind::kConstant;

  if (name == "exp1-desk") {
    c.tasks = {mk_task(0, 1.0, 4, 5), mk_task(1, 2.0, 16, 5), mk_task(2, 3.0, 48, 5)};
    c.n_clients = 60;
    c.points_per_client = {20, 40};
    c.noniid_fraction = 1.0;
    c.test_points_per_task = 800;
    c.training.participation = 0.35;
    c.training.tau = 5;
    c.training.batch_size = 4;
    c.training.rounds = 200;
    c.training.lr.eta = 0.1;
    c.policies = {alpha_policy(3.0, "alpha_fair_a3"), plain_policy(PolicyKind::kRandom, "random"),
                  plain_policy(PolicyKind::kRoundRobin, "round_robin")};
    c.seeds = {1, 2, 3, 4, 5};
    return c;
  }
  if (name == "exp2-tasks") {
    c.tasks = {mk_task(0, 1.0, 4, 5),  mk_task(1, 1.4, 8, 5),  mk_task(2, 1.8, 14, 5),
               mk_task(3, 2.2, 22, 5), mk_task(4, 2.6, 34, 5), mk_task(5, 3.0, 48, 5)};
    c.n_clients = 60;
    c.points_per_client = {20, 40};
    c.noniid_fraction = 1.0;
    c.test_points_per_task = 400;
    c.training.participation = 0.35;
    c.training.tau = 5;
    c.training.batch_size = 4;
    c.training.rounds = 150;
    c.training.lr.eta = 0.1;
    c.policies = {alpha_policy(3.0, "alpha_fair_a3"), plain_policy(PolicyKind::kRandom, "random"),
                  plain_policy(PolicyKind::kRoundRobin, "round_robin")};
    c.seeds = {1, 2, 3};
    return c;
  }
  if (name == "exp3-clients") {
    c.tasks = {mk_task(0, 1.0, 4, 5), mk_task(1, 2.0, 16, 5), mk_task(2, 3.0, 48, 5)};
    c.n_clients = 90;
    c.points_per_client = {15, 30};
    c.noniid_fraction = 1.0;
    c.test_points_per_task = 400;
    c.training.participation = 0.25;
    c.training.tau = 5;
    c.training.batch_size = 4;
    c.training.rounds = 120;
    c.training.lr.eta = 0.1;
    c.policies = {alpha_policy(3.0, "alpha_fair_a3"), plain_policy(PolicyKind::kRandom, "random"),
                  plain_policy(PolicyKind::kRoundRobin, "round_robin")};
    c.seeds = {1, 2, 3};
    return c;
  }
  if (name == "exp4-alpha") {
    c.tasks = {mk_task(0, 1.0, 4, 5), mk_task(1, 2.0, 16, 5), mk_task(2, 3.0, 48, 5)};
    c.n_clients = 60;
    c.points_per_client = {20, 40};
    c.noniid_fraction = 1.0;
    c.test_points_per_task = 800;
    c.training.participation = 0.35;
    c.training.tau = 5;
    c.training.batch_size = 4;
    c.training.rounds = 200;
    c.training.lr.eta = 0.1;
    c.policies = {alpha_policy(1.0, "alpha_fair_a1"), alpha_policy(2.0, "alpha_fair_a2"),
                  alpha_policy(3.0, "alpha_fair_a3"), alpha_policy(6.0, "alpha_fair_a6"),
                  alpha_policy(64.0, "alpha_fair_a64")};
    c.seeds = {1, 2, 3};
    return c;
  }
  if (name == "exp5-auctions") {
    c.tasks = {mk_task(0, 1.0, 4, 5), mk_task(1, 3.0, 12, 5)};
    c.n_clients = 100;
    c.points_per_client = {20, 40};
    c.noniid_fraction = 0.0;
    c.test_points_per_task = 100;
    c.training.participation = 0.35;
    c.training.tau = 1;
    c.training.batch_size = 8;
    c.training.rounds = 0;
    c.training.lr.eta = 0.1;
    c.seeds = {1, 2, 3, 4, 5};
    AuctionConfig ac;
    ac.mode = AuctionConfig::Mode::kSweep;
    ac.mechanisms = {Mechanism::kBudgetFair, Mechanism::kGreedyMaxmin, Mechanism::kMaxminFair};
    for (int b = 2; b <= 30; b += 2) ac.budget_grid.push_back(static_cast<double>(b));
    ac.n_users = 100;
    BidDistribution gaussian_bid;
    gaussian_bid.kind = BidDistribution::Kind::kTruncatedGaussian;
    gaussian_bid.mean = 0.5;
    gaussian_bid.sd = 0.2;
    gaussian_bid.lo = 0.0;
    gaussian_bid.hi = 1.0;
    BidDistribution linear_bid;
    linear_bid.kind = BidDistribution::Kind::kIncreasingLinear;
    linear_bid.lo = 0.0;
    linear_bid.hi = 1.0;
    ac.bid_distributions = {gaussian_bid, linear_bid};
    c.auction = ac;
    return c;
  }
  if (name == "exp6-pipeline") {
    c.tasks = {mk_task(0, 1.0, 4, 5), mk_task(1, 2.5, 24, 5)};
    c.n_clients = 60;
    c.points_per_client = {20, 40};
    c.noniid_fraction = 1.0;
    c.test_points_per_task = 400;
    c.training.participation = 0.35;
    c.training.tau = 5;
    c.training.batch_size = 4;
    c.training.rounds = 150;
    c.training.lr.eta = 0.1;
    c.policies = {alpha_policy(3.0, "alpha_fair_a3")};
    c.seeds = {1, 2, 3};
    AuctionConfig ac;
    ac.mode = AuctionConfig::Mode::kRecruit;
    ac.mechanisms = {Mechanism::kMaxminFair, Mechanism::kBudgetFair};
    ac.budget = 12.0;
    BidDistribution gaussian_bid;
    gaussian_bid.kind = BidDistribution::Kind::kTruncatedGaussian;
    gaussian_bid.mean = 0.5;
    gaussian_bid.sd = 0.2;
    gaussian_bid.lo = 0.0;
    gaussian_bid.hi = 1.0;
    BidDistribution linear_bid;
    linear_bid.kind = BidDistribution::Kind::kIncreasingLinear;
    linear_bid.lo = 0.0;
    linear_bid.hi = 1.0;
    ac.bid_distributions = {gaussian_bid, linear_bid};
    c.auction = ac;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

RunOutputs run_scenario(const ScenarioConfig& config, const std::string& out_dir) {
  validate_config(config);
  const fs::path dir = out_dir.empty()
                           ? fs::path(config.output_dir.empty() ? "out" : config.output_dir)
                           : fs::path(out_dir);
  fs::create_directories(dir);
  RunOutputs outputs;

  const int n_seeds = static_cast<int>(config.seeds.size());

  // Sweep mode: auctions only, one bid draw per seed, shared across budgets.
  if (config.auction && config.auction->mode == AuctionConfig::Mode::kSweep) {
    const AuctionConfig& ac = *config.auction;
    const int n_users = ac.n_users > 0 ? ac.n_users : config.n_clients;
    std::ostringstream rows;
    rows << "mechanism,budget,seed,min_take_up,take_up_diff,total_spent\n";
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> min_take;
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> diff_take;
    for (std::size_t mi = 0; mi < ac.mechanisms.size(); ++mi) {
      for (std::size_t bi = 0; bi < ac.budget_grid.size(); ++bi) {
        for (int si = 0; si < n_seeds; ++si) {
          Rng rng = make_rng(config.seeds[si], 0xb1d5ULL);
          const BidMatrix bids = sample_bids(ac.bid_distributions, n_users, rng);
          const AuctionOutcome out =
              run_auction(ac.mechanisms[mi], bids, ac.budget_grid[bi]);
          const double mx = *std::max_element(out.take_up.begin(), out.take_up.end());
          const double diff = mx - out.min_take_up;
          double spent = 0.0;
          for (double v : out.task_spent) spent += v;
          rows << mechanism_name(ac.mechanisms[mi]) << ','
               << format_double(ac.budget_grid[bi]) << ',' << config.seeds[si] << ','
               << format_double(out.min_take_up) << ',' << format_double(diff) << ','
               << format_double(spent) << '\n';
          min_take[{mi, bi}].push_back(out.min_take_up);
          diff_take[{mi, bi}].push_back(diff);
        }
      }
    }
    write_file(dir / "auction_sweep.csv", rows.str(), outputs.files_written);

    std::ostringstream agg;
    agg << "mechanism,budget,min_take_up_mean,min_take_up_min,min_take_up_max,"
           "take_up_diff_mean\n";
    for (std::size_t mi = 0; mi < ac.mechanisms.size(); ++mi) {
      for (std::size_t bi = 0; bi < ac.budget_grid.size(); ++bi) {
        const auto& mt = min_take[{mi, bi}];
        const auto& dt = diff_take[{mi, bi}];
        const double mean =
            std::accumulate(mt.begin(), mt.end(), 0.0) / static_cast<double>(mt.size());
        const double dmean =
            std::accumulate(dt.begin(), dt.end(), 0.0) / static_cast<double>(dt.size());
        agg << mechanism_name(ac.mechanisms[mi]) << ',' << format_double(ac.budget_grid[bi])
            << ',' << format_double(mean) << ','
            << format_double(*std::min_element(mt.begin(), mt.end())) << ','
            << format_double(*std::max_element(mt.begin(), mt.end())) << ','
            << format_double(dmean) << '\n';
      }
    }
    write_file(dir / "auction_sweep_aggregate.csv", agg.str(), outputs.files_written);
    if (config.policies.empty() || config.training.rounds == 0) return outputs;
  }

  // Scenario data depends only on the seed, so every policy (and mechanism)
  // sees the same clients for a given seed.
  std::vector<Scenario> scenarios(n_seeds);
  parallel_for(static_cast<std::size_t>(n_seeds), [&](std::size_t i) {
    scenarios[i] = generate_scenario(config.tasks, config.n_clients, config.points_per_client,
                                     config.noniid_fraction, config.seeds[i],
                                     config.test_points_per_task);
  });

  const bool recruit =
      config.auction && config.auction->mode == AuctionConfig::Mode::kRecruit;
  std::vector<int> mechanism_ids;
  if (recruit) {
    for (std::size_t mi = 0; mi < config.auction->mechanisms.size(); ++mi)
      mechanism_ids.push_back(static_cast<int>(mi));
  } else {
    mechanism_ids.push_back(-1);
  }

  std::vector<TrainingCell> cells;
  for (int mech : mechanism_ids)
    for (std::size_t pi = 0; pi < config.policies.size(); ++pi)
      for (int si = 0; si < n_seeds; ++si)
        cells.push_back({mech, static_cast<int>(pi), si});

  std::vector<TrainingResult> results(cells.size());
  std::vector<nlohmann::json> recruit_info(cells.size());
  parallel_for(cells.size(), [&](std::size_t ci) {
    const TrainingCell& cell = cells[ci];
    const Scenario& scenario = scenarios[cell.seed];
    const std::uint64_t seed = config.seeds[cell.seed];

    std::optional<Recruitment> recruitment;
    if (cell.mechanism >= 0) {
      const AuctionConfig& ac = *config.auction;
      Rng bid_rng = make_rng(seed, 0xb1d5ULL);
      const BidMatrix bids = sample_bids(ac.bid_distributions, config.n_clients, bid_rng);
      const AuctionOutcome out =
          run_auction(ac.mechanisms[cell.mechanism], bids, ac.budget);
      recruitment = recruitment_from_outcome(out, config.n_clients);

      std::vector<int> full_counts(scenario.n_tasks(), 0);
      std::vector<int> frac_counts(scenario.n_tasks(), 0);
      for (int k = 0; k < config.n_clients; ++k) {
        for (int s = 0; s < scenario.n_tasks(); ++s) {
          const double x = recruitment->participation_x[k][s];
          if (x >= 1.0)
            ++full_counts[s];
          else if (x > 0.0)
            ++frac_counts[s];
        }
      }
      nlohmann::json info;
      info["mechanism"] = mechanism_name(ac.mechanisms[cell.mechanism]);
      info["budget"] = ac.budget;
      info["full_winners"] = full_counts;
      info["fractional_winners"] = frac_counts;
      info["take_up"] = out.take_up;
      info["min_take_up"] = out.min_take_up;
      const bool starved =
          std::any_of(full_counts.begin(), full_counts.end(), [&](int nfull) {
            return nfull == 0;
          });
      info["starved_task"] = starved;
      recruit_info[ci] = std::move(info);
    }

    results[ci] = run_training(scenario, config.policies[cell.policy].policy, config.training,
                               seed, recruitment ? &*recruitment : nullptr);
  });

  // Deterministic write order regardless of scheduling.
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const TrainingCell& cell = cells[ci];
    std::string label = sanitize(config.policies[cell.policy].name);
    if (cell.mechanism >= 0)
      label = sanitize(mechanism_name(config.auction->mechanisms[cell.mechanism])) + "_" + label;
    const std::uint64_t seed = config.seeds[cell.seed];

    std::ostringstream csv;
    write_metrics_csv(csv, results[ci].rounds);
    write_file(dir / (label + "_seed" + std::to_string(seed) + ".csv"), csv.str(),
               outputs.files_written);

    nlohmann::json summary = run_summary(results[ci], seed);
    summary["policy"] = config.policies[cell.policy].name;
    if (cell.mechanism >= 0) {
      summary["recruitment"] = recruit_info[ci];
      if (recruit_info[ci]["starved_task"].get<bool>())
        std::cerr << "warning: " << label << " seed " << seed
                  << ": a task has no recruited clients and will stay frozen\n";
    }
    write_file(dir / (label + "_seed" + std::to_string(seed) + "_summary.json"),
               summary.dump(2) + "\n", outputs.files_written);
  }

  for (int mech : mechanism_ids) {
    for (std::size_t pi = 0; pi < config.policies.size(); ++pi) {
      std::string label = sanitize(config.policies[pi].name);
      if (mech >= 0)
        label = sanitize(mechanism_name(config.auction->mechanisms[mech])) + "_" + label;
      std::vector<TrainingResult> group;
      for (std::size_t ci = 0; ci < cells.size(); ++ci)
        if (cells[ci].mechanism == mech && cells[ci].policy == static_cast<int>(pi))
          group.push_back(results[ci]);
      write_file(dir / (label + "_aggregate.csv"), aggregate_csv(group),
                 outputs.files_written);
    }
  }
  return outputs;
}

nlohmann::json analyze_directory(const std::string& dir) {
  if (!fs::is_directory(dir)) throw Error("analyze_directory: not a directory: " + dir);
  std::map<std::string, std::vector<nlohmann::json>> groups;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string fname = entry.path().filename().string();
    const auto pos = fname.find("_seed");
    if (pos == std::string::npos || fname.size() < 13) continue;
    if (fname.substr(fname.size() - 13) != "_summary.json") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string fname = path.filename().string();
    const std::string label = fname.substr(0, fname.find("_seed"));
    std::ifstream in(path);
    nlohmann::json j;
    in >> j;
    groups[label].push_back(std::move(j));
  }

  nlohmann::json report;
  report["policies"] = nlohmann::json::object();
  for (const auto& [label, summaries] : groups) {
    nlohmann::json entry;
    entry["seeds"] = summaries.size();
    std::vector<double> mean_acc;
    double mean_min = 0.0;
    double mean_var = 0.0;
    for (const auto& s : summaries) {
      const auto acc = s.at("final_accuracy").get<std::vector<double>>();
      if (mean_acc.empty()) mean_acc.assign(acc.size(), 0.0);
      if (acc.size() != mean_acc.size())
        throw Error("analyze_directory: task count differs across summaries for " + label);
      for (std::size_t i = 0; i < acc.size(); ++i) mean_acc[i] += acc[i];
      mean_min += s.at("min_accuracy").get<double>();
      mean_var += s.at("accuracy_variance").get<double>();
    }
    const double n = static_cast<double>(summaries.size());
    for (double& v : mean_acc) v /= n;
    entry["mean_final_accuracy"] = mean_acc;
    entry["mean_min_accuracy"] = mean_min / n;
    entry["mean_accuracy_variance"] = mean_var / n;
    entry["fairness"] = fairness_metrics(mean_acc).to_json();
    report["policies"][label] = std::move(entry);
  }
  return report;
}

}  // namespace mmfl
