"""Fair multi-task federated learning: allocation, auctions, and analysis.

The heavy lifting lives in the compiled ``_core`` extension; this wrapper
decodes its JSON results into plain dicts and accepts plain Python data.
"""

import json as _json

from . import _core as _c

__version__ = _c.__version__

alpha_fair_probabilities = _c.alpha_fair_probabilities
aggregation_weights = _c.aggregation_weights
qfel_update_scale = _c.qfel_update_scale
selection_set_probability = _c.selection_set_probability
expected_inverse_selection_size = _c.expected_inverse_selection_size
starvation_probability_exponential = _c.starvation_probability_exponential
winner_set_factor = _c.winner_set_factor
preset_names = _c.preset_names


def run_auction(mechanism, bids, budget, costs=None, trace=False):
    """Run one auction.

    ``bids`` is a list of per-user lists (one entry per task, ``None`` for no
    bid); ``costs`` optionally mirrors its shape.
    """
    payload = {"bids": bids}
    if costs is not None:
        payload["costs"] = costs
    return _json.loads(_c.run_auction(mechanism, _json.dumps(payload), budget, trace))


def proportional_share(bids, budget):
    return _json.loads(_c.proportional_share(list(bids), budget))


def deviation_report(bids, costs, user, task, deviated_bid, budget):
    payload = {"bids": bids, "costs": costs}
    return _json.loads(
        _c.deviation_report(_json.dumps(payload), user, task, deviated_bid, budget)
    )


def fairness_metrics(values):
    return _json.loads(_c.fairness_metrics(list(values)))


def brute_force_alpha_fair_optimum(loss_curves, n_clients, alpha):
    return _json.loads(_c.brute_force_alpha_fair_optimum(loss_curves, n_clients, alpha))


def preset_config(name):
    return _json.loads(_c.preset_config(name))


def simulate(config, out_dir):
    """Run a scenario config (dict or JSON string); returns files written."""
    if not isinstance(config, str):
        config = _json.dumps(config)
    return _c.simulate(config, str(out_dir))


def analyze(run_dir):
    return _json.loads(_c.analyze(str(run_dir)))
