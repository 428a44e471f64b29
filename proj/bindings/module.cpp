// Python bindings. Rich results cross the boundary as JSON strings; the
// package wrapper in python/mmfl decodes them into plain dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "mmfl/analysis.hpp"
#include "mmfl/auctions.hpp"
#include "mmfl/harness.hpp"

namespace py = pybind11;

namespace {

nlohmann::json parse(const std::string& text, const char* what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw mmfl::ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Fair multi-task federated learning: allocation, auctions, analysis";
  m.attr("__version__") = "0.1.0";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const mmfl::ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const mmfl::DomainError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const mmfl::ShapeError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const mmfl::Error& e) {
      PyErr_SetString(PyExc_RuntimeError, e.what());
    }
  });

  m.def("alpha_fair_probabilities", &mmfl::alpha_fair_probabilities,
        py::arg("signals"), py::arg("alpha"),
        "Per-task assignment probabilities proportional to signal^(alpha-1).");

  m.def("aggregation_weights", &mmfl::aggregation_weights, py::arg("selected_fractions"),
        "Data fractions renormalized over the selected clients.");

  m.def("qfel_update_scale", &mmfl::qfel_update_scale, py::arg("signals"), py::arg("q"),
        "Mean-one per-task aggregation scaling proportional to signal^q.");

  m.def(
      "run_auction",
      [](const std::string& mechanism, const std::string& bids_json, double budget,
         bool trace) {
        const mmfl::Mechanism mech = mmfl::mechanism_from_string(mechanism);
        const mmfl::BidMatrix bids =
            mmfl::BidMatrix::from_json(parse(bids_json, "bids"));
        nlohmann::json result;
        if (trace && mech == mmfl::Mechanism::kMaxminFair) {
          mmfl::AuctionTrace t;
          result["outcome"] = mmfl::maxmin_fair_auction(bids, budget, &t).to_json();
          result["trace"] = t.to_json();
        } else {
          result["outcome"] = mmfl::run_auction(mech, bids, budget).to_json();
        }
        return result.dump();
      },
      py::arg("mechanism"), py::arg("bids_json"), py::arg("budget"),
      py::arg("trace") = false,
      "Run one auction; bids_json follows the CLI bids file schema.");

  m.def(
      "proportional_share",
      [](const std::vector<double>& bids, double budget) {
        return mmfl::proportional_share(bids, budget).to_json().dump();
      },
      py::arg("bids"), py::arg("budget"),
      "Single-task ascending-bid rule with a fixed budget.");

  m.def(
      "deviation_report",
      [](const std::string& bids_json, int user, int task, double deviated_bid,
         double budget) {
        const mmfl::BidMatrix bids =
            mmfl::BidMatrix::from_json(parse(bids_json, "bids"));
        const mmfl::DeviationReport r =
            mmfl::deviation_harness(bids, user, task, deviated_bid, budget);
        nlohmann::json j;
        j["truthful_utility"] = r.truthful_utility;
        j["deviated_utility"] = r.deviated_utility;
        j["truthful_total_utility"] = r.truthful_total_utility;
        j["deviated_total_utility"] = r.deviated_total_utility;
        j["profitable"] = r.profitable;
        j["round_type"] = mmfl::deviation_round_type_name(r.round_type);
        j["maxmin_gap"] = r.maxmin_gap;
        return j.dump();
      },
      py::arg("bids_json"), py::arg("user"), py::arg("task"), py::arg("deviated_bid"),
      py::arg("budget"),
      "Compare one user's truthful and deviated runs of the max-min auction.");

  m.def(
      "fairness_metrics",
      [](const std::vector<double>& values) {
        return mmfl::fairness_metrics(values).to_json().dump();
      },
      py::arg("values"), "Mean, variance, minimum, and cosine ratio of positive values.");

  m.def("selection_set_probability", &mmfl::selection_set_probability, py::arg("q"),
        py::arg("n_clients"), py::arg("sel_size"));

  m.def("expected_inverse_selection_size", &mmfl::expected_inverse_selection_size,
        py::arg("signals"), py::arg("alpha"), py::arg("n_clients"),
        "E[1/|Sel|] over nonempty selections of the argmax-signal task.");

  m.def(
      "starvation_probability_exponential",
      [](double rate, double budget, int n_tasks, const std::string& mechanism) {
        return mmfl::starvation_probability_exponential(
            rate, budget, n_tasks, mmfl::mechanism_from_string(mechanism));
      },
      py::arg("rate"), py::arg("budget"), py::arg("n_tasks"), py::arg("mechanism"),
      "Closed-form probability that some task recruits nobody.");

  m.def("winner_set_factor", &mmfl::winner_set_factor, py::arg("join_probabilities"));

  m.def(
      "brute_force_alpha_fair_optimum",
      [](const std::vector<std::vector<double>>& loss_curves, int n_clients, double alpha) {
        const mmfl::CurveAllocation a =
            mmfl::brute_force_alpha_fair_optimum(loss_curves, n_clients, alpha);
        nlohmann::json j;
        j["counts"] = a.counts;
        j["losses"] = a.losses;
        j["objective"] = a.objective;
        return j.dump();
      },
      py::arg("loss_curves"), py::arg("n_clients"), py::arg("alpha"),
      "Exact minimizer of sum loss(n_s)^alpha over integer client allocations.");

  m.def("preset_names", &mmfl::preset_names);

  m.def(
      "preset_config",
      [](const std::string& name) { return mmfl::preset_config(name).to_json().dump(); },
      py::arg("name"), "A built-in scenario configuration as JSON.");

  m.def(
      "simulate",
      [](const std::string& config_json, const std::string& out_dir) {
        const mmfl::ScenarioConfig config =
            mmfl::ScenarioConfig::from_json(parse(config_json, "config"));
        return mmfl::run_scenario(config, out_dir).files_written;
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Run a scenario config; returns the list of files written.");

  m.def(
      "analyze",
      [](const std::string& dir) { return mmfl::analyze_directory(dir).dump(); },
      py::arg("dir"), "Fairness report over the run summaries in a directory.");
}
