"""Built-in example networks used throughout the experiments.

All four use the same bursty arrival: a two-state on-off chain switching
off->on with probability 0.7 and on->off with probability 0.1, emitting
Poisson(2) data units per on-slot.

fig1a          two servers, one flow; both servers serve 5 resp. 6 units
               with probability one half (zero otherwise).
fig1b          three constant-rate servers (5, 7, 6) with interleaved
               cross flows 2:[1,2] and 3:[2,3].
sinktree_up    constant rates (4, 5, 6); flows 1:[1,3], 2:[2,3], 3:[3,3];
               the last server carries the most load.
sinktree_down  same topology with rates (2, 5, 8); the first server
               carries the most load.
"""

from __future__ import annotations

import copy

from .network import TandemNetwork, parse_network

_ONOFF_ARRIVAL = {
    "transition": [[0.3, 0.7], [0.1, 0.9]],
    "emissions": [
        {"type": "constant", "value": 0},
        {"type": "poisson", "mean": 2.0},
    ],
}


def _bernoulli_server(sid: int, value: float, prob: float) -> dict:
    return {
        "id": sid,
        "service": {
            "type": "mmp",
            "transition": [[1.0]],
            "emissions": [{"type": "bernoulli_scaled", "value": value, "prob": prob}],
        },
    }


def _constant_server(sid: int, rate: float) -> dict:
    return {"id": sid, "service": {"type": "constant_rate", "rate": rate}}


def _flow(fid: int, first: int, last: int) -> dict:
    return {
        "id": fid,
        "first": first,
        "last": last,
        "arrival": copy.deepcopy(_ONOFF_ARRIVAL),
    }


def _fig1a() -> dict:
    return {
        "servers": [_bernoulli_server(1, 5, 0.5), _bernoulli_server(2, 6, 0.5)],
        "flows": [_flow(1, 1, 2)],
    }


def _fig1b() -> dict:
    return {
        "servers": [
            _constant_server(1, 5.0),
            _constant_server(2, 7.0),
            _constant_server(3, 6.0),
        ],
        "flows": [_flow(1, 1, 3), _flow(2, 1, 2), _flow(3, 2, 3)],
    }


def _sinktree(rates) -> dict:
    return {
        "servers": [_constant_server(j + 1, r) for j, r in enumerate(rates)],
        "flows": [_flow(1, 1, 3), _flow(2, 2, 3), _flow(3, 3, 3)],
    }


_BUILDERS = {
    "fig1a": _fig1a,
    "fig1b": _fig1b,
    "sinktree_up": lambda: _sinktree([4.0, 5.0, 6.0]),
    "sinktree_down": lambda: _sinktree([2.0, 5.0, 8.0]),
}

CORPUS_NAMES = tuple(sorted(_BUILDERS))


def corpus_document(name: str) -> dict:
    """Fresh JSON document for a built-in network."""
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise KeyError(
            f"unknown corpus {name!r}, available: {', '.join(CORPUS_NAMES)}"
        ) from None


def corpus_network(name: str) -> TandemNetwork:
    return parse_network(corpus_document(name))
