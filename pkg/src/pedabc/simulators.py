"""Seeded data generators: Gaussian samplers and agent-based network models.

The network models move every agent one node per tick.  Agents never
interact, so the synchronous update is realised by iterating over agents
within a tick; each agent reads only its own state.  All randomness for a
run is drawn up front from one :class:`numpy.random.Generator`, which makes
a run a pure function of ``(parameters, seed)`` and lets the inner loop be
compiled with numba.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .validation import check_probability, check_simplex

__all__ = [
    "ENTRY_EXIT",
    "INTERSECTION",
    "TAIL",
    "NetworkModel",
    "build_fork_network",
    "build_cbd_network",
    "load_network",
    "restricted_turning",
    "transition_probabilities",
    "simulate_gaussian",
    "simulate_fork",
    "simulate_cbd",
    "GaussianModel",
    "GaussianMeanModel",
    "ForkModel",
    "CBDModel",
    "MODELS",
    "make_model",
    "simulate",
    "rng_from_key",
    "CBD_COUNTERS",
]

ENTRY_EXIT = "entry_exit"
INTERSECTION = "intersection"
TAIL = "tail"
_ROLES = (ENTRY_EXIT, INTERSECTION, TAIL)

# counter name -> node id for the Centre Place network
CBD_COUNTERS = {"AW": 5, "TR": 2, "TA": 0, "CPS": 1}


def rng_from_key(key):
    """Generator for a seed key: an int or a tuple ``(root, *spawn_key)``."""
    if isinstance(key, np.random.Generator):
        return key
    if isinstance(key, (tuple, list)):
        root, rest = int(key[0]), tuple(int(k) for k in key[1:])
        return np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(root, spawn_key=rest)))
    return np.random.default_rng(key)


@dataclass
class NetworkModel:
    """Undirected node/edge graph with node roles and turning parameters.

    ``turning`` maps an intersection id to a probability vector over that
    node's neighbours in ascending id order.
    """

    nodes: dict
    edges: list
    turning: dict = field(default_factory=dict)
    counters: dict = field(default_factory=dict)

    def __post_init__(self):
        for nid, role in self.nodes.items():
            if role not in _ROLES:
                raise ValueError("node %s has unknown role %r" % (nid, role))
        self._adj = {n: set() for n in self.nodes}
        for a, b in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise ValueError("edge %s-%s references an unknown node" % (a, b))
            self._adj[a].add(b)
            self._adj[b].add(a)
        if not self.is_connected():
            raise ValueError("network must be connected")
        for nid, role in self.nodes.items():
            if role != INTERSECTION and self.degree(nid) < 1:
                raise ValueError("node %s needs at least one edge" % nid)
        for nid, probs in self.turning.items():
            if len(probs) != self.degree(nid):
                raise ValueError("turning vector at node %s has %d entries for "
                                 "degree %d" % (nid, len(probs), self.degree(nid)))

    def neighbors(self, node):
        return sorted(self._adj[node])

    def degree(self, node):
        return len(self._adj[node])

    def is_connected(self):
        if not self.nodes:
            return True
        start = next(iter(self.nodes))
        seen, stack = {start}, [start]
        while stack:
            for m in self._adj[stack.pop()]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == len(self.nodes)

    def is_tree(self):
        return self.is_connected() and len(self.edges) == len(self.nodes) - 1

    def nodes_with_role(self, role):
        return sorted(n for n, r in self.nodes.items() if r == role)


def restricted_turning(probs, neighbors, previous):
    """Drop the backward direction from a turning vector and renormalise.

    If every remaining direction has zero probability the agent is allowed
    to turn back, i.e. the unrestricted vector is used.
    """
    probs = np.asarray(probs, dtype=float)
    if previous is None or previous not in neighbors:
        return probs / probs.sum()
    out = probs.copy()
    out[neighbors.index(previous)] = 0.0
    total = out.sum()
    if total <= 0.0:
        return probs / probs.sum()
    return out / total


def load_network(path):
    """Read a network definition file.

    The file has ``[nodes]`` (``id = role``), ``[edges]`` (``edges = a-b, ...``)
    and an optional ``[counters]`` section (``name = node id``).
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    with open(path) as fh:
        cp.read_file(fh)
    nodes = {int(k): v.strip().lower() for k, v in cp["nodes"].items()}
    edges = []
    for item in cp["edges"].get("edges", "").split(","):
        if item.strip():
            a, b = item.split("-")
            edges.append((int(a), int(b)))
    counters = {}
    if cp.has_section("counters"):
        counters = {k: int(v) for k, v in cp["counters"].items()}
    return NetworkModel(nodes, edges, counters=counters)


def build_fork_network():
    """Seven-node fork: tail 6, intersections 5 and 3, leaves 0, 1, 2, 4."""
    nodes = {0: ENTRY_EXIT, 1: ENTRY_EXIT, 2: ENTRY_EXIT, 3: INTERSECTION,
             4: ENTRY_EXIT, 5: INTERSECTION, 6: TAIL}
    edges = [(6, 5), (5, 3), (5, 1), (3, 0), (3, 2), (3, 4)]
    return NetworkModel(nodes, edges)


def build_cbd_network():
    """Centre Place network: counters 0, 1, 2, 5 around intersections 3 and 4."""
    nodes = {0: ENTRY_EXIT, 1: ENTRY_EXIT, 2: ENTRY_EXIT, 3: INTERSECTION,
             4: INTERSECTION, 5: ENTRY_EXIT}
    edges = [(3, 0), (3, 2), (3, 4), (4, 1), (4, 5)]
    return NetworkModel(nodes, edges, counters=dict(CBD_COUNTERS))


# ---------------------------------------------------------------------------
# compiled movement kernel

class _Compiled:
    """Array form of a network's structure, built once per topology."""

    def __init__(self, network):
        n = max(network.nodes) + 1
        maxdeg = max(network.degree(v) for v in network.nodes)
        self.nbr = np.zeros((n, maxdeg), dtype=np.int64)
        self.deg = np.zeros(n, dtype=np.int64)
        self.uniform = np.zeros((n, maxdeg))
        for v in network.nodes:
            nb = network.neighbors(v)
            self.deg[v] = len(nb)
            self.nbr[v, :len(nb)] = nb
            self.uniform[v, :len(nb)] = 1.0 / len(nb)
        self.is_exit = np.zeros(n, dtype=np.bool_)
        for v in network.nodes_with_role(ENTRY_EXIT):
            self.is_exit[v] = True

    def tables(self, turning):
        base = self.uniform.copy()
        for v, probs in turning.items():
            base[v, :self.deg[v]] = probs
        return _cumulative_tables(self.nbr, self.deg, base)


@njit(cache=True)
def _cumulative_tables(nbr, deg, base):
    # cum[node, previous + 1, slot]; previous == -1 means "just spawned"
    n, maxdeg = nbr.shape
    cum = np.ones((n, n + 1, maxdeg))
    p = np.empty(maxdeg)
    for v in range(n):
        d = deg[v]
        if d == 0:
            continue
        for pi in range(n + 1):
            prev = pi - 1
            total = 0.0
            for j in range(d):
                p[j] = base[v, j]
                if nbr[v, j] == prev:
                    p[j] = 0.0
                total += p[j]
            if total <= 0.0:
                # no forward mass left: allow turning back
                total = 0.0
                for j in range(d):
                    p[j] = base[v, j]
                    total += p[j]
            last = 0
            for j in range(d):
                if p[j] > 0.0:
                    last = j
            acc = 0.0
            for j in range(d):
                acc += p[j] / total
                cum[v, pi, j] = acc if j < last else 1.0
    return cum


@njit(cache=True)
def _walk(nbr, deg, cum, is_exit, spawn_nodes, spawn_cum, start, uniforms):
    n_peds = start.shape[0]
    ticks = uniforms.shape[0]
    counts = np.zeros(nbr.shape[0], dtype=np.int64)
    cur = start.copy()
    prev = np.full(n_peds, -1, dtype=np.int64)
    n_spawn = spawn_nodes.shape[0]
    for t in range(ticks):
        for a in range(n_peds):
            u = cur[a]
            r = uniforms[t, a, 0]
            j = 0
            while j < deg[u] - 1 and r >= cum[u, prev[a] + 1, j]:
                j += 1
            w = nbr[u, j]
            if is_exit[w]:
                counts[w] += 1
                r2 = uniforms[t, a, 1]
                k = 0
                while k < n_spawn - 1 and r2 >= spawn_cum[k]:
                    k += 1
                cur[a] = spawn_nodes[k]
                prev[a] = -1
            else:
                cur[a] = w
                prev[a] = u
    return counts


def _run(compiled, cum, spawn_nodes, spawn_weights, n_peds, ticks, rng):
    spawn_nodes = np.asarray(spawn_nodes, dtype=np.int64)
    w = np.asarray(spawn_weights, dtype=float)
    spawn_cum = np.cumsum(w / w.sum())
    spawn_cum[-1] = 1.0
    start = spawn_nodes[np.searchsorted(spawn_cum, rng.random(n_peds), side="right")]
    uniforms = rng.random((ticks, n_peds, 2))
    return _walk(compiled.nbr, compiled.deg, cum, compiled.is_exit,
                 spawn_nodes, spawn_cum, start, uniforms)


def transition_probabilities(network, node, previous=None):
    """Next-node probabilities used by the simulator at ``node``.

    Returned as a dict ``{neighbour: probability}``.
    """
    compiled = _Compiled(network)
    cum = compiled.tables(network.turning)
    row = cum[node, 0 if previous is None else previous + 1, :compiled.deg[node]]
    probs = np.diff(np.concatenate([[0.0], row]))
    return dict(zip(network.neighbors(node), probs))


def simulate_gaussian(mean, sd, n, seed):
    """``n`` independent Normal(mean, sd) draws."""
    if not sd > 0:
        raise ValueError("sd must be > 0")
    if n < 1:
        raise ValueError("n must be >= 1")
    return rng_from_key(seed).normal(mean, sd, int(n))


_FORK = build_fork_network()
_FORK_COMPILED = _Compiled(_FORK)
_FORK_CUM = _FORK_COMPILED.tables({})


def simulate_fork(p_to_node0, n_peds, ticks, seed, network=None, return_all=False):
    """Count arrivals at node 0 of the fork network.

    Agents start at the tail (node 6).  At node 3, coming from 5, an agent
    heads to node 0 with probability ``p_to_node0`` and to nodes 2 and 4 with
    ``(1 - p) / 2`` each; every other choice is uniform over the non-backward
    neighbours.  Reaching a leaf records a count and puts the agent back on
    the tail.
    """
    p = check_probability(p_to_node0, "p_to_node0")
    if n_peds < 0:
        raise ValueError("n_peds must be >= 0")
    if ticks < 1:
        raise ValueError("ticks must be >= 1")
    if network is None:
        net, compiled, cum = _FORK, _FORK_COMPILED, _FORK_CUM.copy()
    else:
        net = network
        compiled = _Compiled(net)
        cum = compiled.tables(net.turning)
    # node 3 reached from 5: neighbours (0, 2, 4, 5)
    cum[3, 6, :4] = [p, p + (1 - p) / 2, 1.0, 1.0]
    rng = rng_from_key(seed)
    tails = net.nodes_with_role(TAIL)
    counts = _run(compiled, cum, tails, np.ones(len(tails)), int(n_peds), int(ticks), rng)
    if return_all:
        return counts
    return int(counts[0])


_CBD = build_cbd_network()
_CBD_COMPILED = _Compiled(_CBD)
_CBD_ENTRY = (0, 1, 2, 5)


def simulate_cbd(theta1, theta2, n_peds, ticks, entry_weights, seed):
    """Exit counts at nodes (0, 1, 2, 5) of the Centre Place network.

    ``theta1`` is the turning vector at node 4 over neighbours (1, 3, 5) and
    ``theta2`` the one at node 3 over (0, 2, 4).  ``entry_weights`` gives the
    relative spawn rate of nodes (0, 1, 2, 5).
    """
    theta1 = check_simplex(theta1, 3, "theta1")
    theta2 = check_simplex(theta2, 3, "theta2")
    if n_peds < 0:
        raise ValueError("n_peds must be >= 0")
    entry_weights = np.asarray(entry_weights, dtype=float)
    if entry_weights.shape != (4,) or np.any(entry_weights <= 0):
        raise ValueError("entry_weights must be four positive values")
    rng = rng_from_key(seed)
    cum = _CBD_COMPILED.tables({4: theta1, 3: theta2})
    counts = _run(_CBD_COMPILED, cum, _CBD_ENTRY, entry_weights, int(n_peds), int(ticks), rng)
    return counts[list(_CBD_ENTRY)]


# ---------------------------------------------------------------------------
# models: parameter vector -> summary vector

def _round_half_up(x):
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class GaussianModel:
    """Normal data with unknown mean and sd, summarised by (mean, sd)."""

    n: int = 1000
    summary_names = ("mean", "sd")
    param_names = ("mean", "sd")

    def simulate(self, params, seed):
        y = simulate_gaussian(params["mean"], params["sd"], self.n, seed)
        return np.array([y.mean(), y.std(ddof=1)])


@dataclass(frozen=True)
class GaussianMeanModel:
    """Normal data with unknown mean and known sd, summarised by the mean."""

    sd: float = 1.0
    n: int = 10000
    summary_names = ("mean",)
    param_names = ("mean",)

    def simulate(self, params, seed):
        y = simulate_gaussian(params["mean"], self.sd, self.n, seed)
        return np.array([y.mean()])


@dataclass(frozen=True)
class ForkModel:
    """Fork network; summary is the node-0 count after ``ticks`` ticks."""

    n_peds: int = 15
    ticks: int = 100
    summary_names = ("node0",)
    param_names = ("p",)

    def simulate(self, params, seed):
        n_peds = params.get("n_peds", self.n_peds)
        c = simulate_fork(params["p"], _round_half_up(float(n_peds)), self.ticks, seed)
        return np.array([float(c)])


@dataclass(frozen=True)
class CBDModel:
    """Centre Place network; summary is the counts at (AW, TR, TA, CPS).

    ``entry_weights`` is given in the same counter order.
    """

    ticks: int = 100
    entry_weights: tuple = (321.0, 222.0, 202.0, 380.0)
    n_peds: int = 27
    summary_names = ("AW", "TR", "TA", "CPS")
    param_names = ("theta1", "theta2", "n_peds")

    def simulate(self, params, seed):
        # reorder counter-ordered weights to node order (0, 1, 2, 5)
        w = dict(zip(self.summary_names, self.entry_weights))
        entry = [w[name] for name in ("TA", "CPS", "TR", "AW")]
        n_peds = params.get("n_peds", self.n_peds)
        counts = simulate_cbd(params["theta1"], params["theta2"],
                              max(0, _round_half_up(float(n_peds))),
                              self.ticks, entry, seed)
        by_node = dict(zip(_CBD_ENTRY, counts))
        return np.array([float(by_node[CBD_COUNTERS[n]]) for n in self.summary_names])


MODELS = {
    "gaussian": GaussianModel,
    "gaussian_mean": GaussianMeanModel,
    "fork": ForkModel,
    "cbd": CBDModel,
}


def make_model(model_id, **options):
    """Instantiate a registered model with keyword options."""
    try:
        cls = MODELS[model_id]
    except KeyError:
        raise KeyError("unknown model %r (known: %s)"
                       % (model_id, ", ".join(sorted(MODELS)))) from None
    return cls(**options)


def simulate(model, params, seed):
    """Run ``model`` (an instance or registered id) at ``params``.

    ``params`` maps parameter names to values.  Returns the summary vector.
    """
    if isinstance(model, str):
        model = make_model(model)
    missing = [n for n in model.param_names
               if n not in params and not hasattr(model, n)]
    if missing:
        raise ValueError("missing parameters for %s: %s"
                         % (type(model).__name__, ", ".join(missing)))
    return model.simulate(params, seed)
