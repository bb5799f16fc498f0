"""Synthetic time-varying networks by forward-sampling the influence model.

Generation draws the emotion and influence variables jointly from the
model's own Gibbs measure with planted parameters (visual-evidence factors
excluded: image features are drawn afterwards from class-conditional
Gaussians given the sampled image labels). Influence is planted by a strong
per-directed-edge prior on the influence variables, and the joint sampler
resolves everything else. The full hidden state is returned alongside the
observable network so recovery can be scored.

The sampler is a chromatic Gibbs sweep: variables are greedily colored so
that no two variables sharing a factor get the same color, then each sweep
updates one color class at a time (conditionally independent, so the update
vectorizes) -- the stationary distribution is the same as for the plain
single-site scan.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Iterable, Mapping, Optional

import numpy as np

from .factorgraph import (
    FactorGraph,
    ImageVar,
    InfluenceVar,
    ParameterSet,
    UserVar,
    VariableId,
    build_graph,
    parse_var_key,
    var_key,
)
from .network import (
    FEATURE_DIM,
    ImageRecord,
    TimeVaryingNetwork,
    as_category,
)


@dataclass
class SynthConfig:
    seed: int = 0
    n_users: int = 50
    horizon: int = 8
    mean_degree: float = 4.0
    images_per_slice: float = 2.0        # Poisson mean per (user, slice)
    influence_density: float = 0.3       # fraction of directed edges planted
    label_rate: float = 0.5              # fraction of image labels revealed
    feature_separation: float = 1.5      # |mean(+1) - mean(-1)| in sigma units
    feature_sigma: float = 1.0
    category: str = "happiness"
    window: int = 1
    dynamic_edges: bool = False
    burn_in: int = 1000
    influence_bias: float = 25.0         # planted prior strength (log-odds)
    emotion_bias: float = 0.0            # prior log-odds on every user emotion;
                                         # negative makes the emotion a minority
                                         # property carried by local pockets
    # planted model parameters (per-user constants)
    owner_coupling: float = 1.0
    temporal_weight: float = 0.3
    temporal_decay: float = 1.0
    social_weight: float = 1.5
    stability_weight: float = 1.0
    stability_decay: float = 1.0

    def __post_init__(self):
        if self.n_users < 1 or self.horizon < 1:
            raise ValueError("need at least one user and one slice")
        for name in ("influence_density", "label_rate"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.images_per_slice < 0 or self.mean_degree < 0:
            raise ValueError("rates must be non-negative")
        if self.burn_in < 1:
            raise ValueError("burn_in must be >= 1")

    def planted_params(self, users: Iterable[str]) -> ParameterSet:
        return ParameterSet.constant(
            users,
            owner_coupling=self.owner_coupling,
            temporal_weight=self.temporal_weight,
            temporal_decay=self.temporal_decay,
            social_weight=self.social_weight,
            stability_weight=self.stability_weight,
            stability_decay=self.stability_decay,
        )

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: Mapping) -> "SynthConfig":
        return cls(**dict(obj))


# -- chromatic Gibbs sampler ---------------------------------------------------


class GibbsSampler:
    """Single-site Gibbs over a factor graph, scheduled by graph coloring.

    Clamped variables stay fixed. ``bias`` adds per-variable log-odds toward
    the high domain value (index 1).
    """

    def __init__(self, graph: FactorGraph, params: ParameterSet,
                 bias: Optional[Mapping[VariableId, float]] = None):
        self.graph = graph
        n = len(graph.variables)
        self.n = n
        tables = graph.compile_tables(params)

        self.static = np.zeros(n)
        if bias:
            for var, b in bias.items():
                self.static[graph.var_index[var]] += float(b)

        neighbors: list[set[int]] = [set() for _ in range(n)]
        incidences = []  # (arity, slot, table, target, others)
        for factor, table in zip(graph.factors, tables):
            arity = len(factor.vars)
            for a in factor.vars:
                for b in factor.vars:
                    if a != b:
                        neighbors[a].add(b)
            for slot, v in enumerate(factor.vars):
                if v in graph.clamps:
                    continue
                if arity == 1:
                    self.static[v] += float(table[1] - table[0])
                    continue
                others = tuple(factor.vars[j] for j in range(arity) if j != slot)
                incidences.append((arity, slot, table, v, others))

        colors: dict[int, int] = {}
        for v in range(n):
            if v in graph.clamps:
                continue
            used = {colors[u] for u in neighbors[v] if u in colors}
            c = 0
            while c in used:
                c += 1
            colors[v] = c
        ncolors = max(colors.values()) + 1 if colors else 0

        # per color: member variables plus vectorized gather plans by (arity, slot)
        self.color_vars = [np.array(sorted(v for v, c in colors.items() if c == k),
                                    dtype=np.int64)
                           for k in range(ncolors)]
        self.color_plans = []
        for k in range(ncolors):
            plans: dict[tuple[int, int], list] = {}
            for arity, slot, table, target, others in incidences:
                if colors.get(target) == k:
                    plans.setdefault((arity, slot), []).append((table, target, others))
            packed = []
            for (arity, slot), rows in plans.items():
                tab = np.stack([r[0] for r in rows])
                targets = np.array([r[1] for r in rows], dtype=np.int64)
                others = np.array([r[2] for r in rows], dtype=np.int64)
                packed.append((arity, slot, tab, targets, others))
            self.color_plans.append(packed)

        self.init_state = np.zeros(n, dtype=np.int8)
        for vi, didx in graph.clamps.items():
            self.init_state[vi] = didx

    def _log_odds(self, plan, state: np.ndarray) -> np.ndarray:
        arity, slot, tab, targets, others = plan
        rows = np.arange(len(targets))
        if arity == 2:
            o = state[others[:, 0]]
            if slot == 0:
                contrib = tab[rows, 1, o] - tab[rows, 0, o]
            else:
                contrib = tab[rows, o, 1] - tab[rows, o, 0]
        else:
            o1 = state[others[:, 0]]
            o2 = state[others[:, 1]]
            if slot == 0:
                contrib = tab[rows, 1, o1, o2] - tab[rows, 0, o1, o2]
            elif slot == 1:
                contrib = tab[rows, o1, 1, o2] - tab[rows, o1, 0, o2]
            else:
                contrib = tab[rows, o1, o2, 1] - tab[rows, o1, o2, 0]
        return np.bincount(targets, weights=contrib, minlength=self.n)

    def sweep(self, state: np.ndarray, rng: np.random.Generator) -> None:
        for members, plans in zip(self.color_vars, self.color_plans):
            if not len(members):
                continue
            total = self.static.copy()
            for plan in plans:
                total += self._log_odds(plan, state)
            p_high = 1.0 / (1.0 + np.exp(-total[members]))
            draws = rng.random(len(members))
            state[members] = (draws < p_high).astype(np.int8)

    def run(self, sweeps: int, rng: np.random.Generator,
            record: bool = False, init: Optional[Mapping[VariableId, int]] = None):
        """Run ``sweeps`` full sweeps.

        Starts from a uniform random state unless ``init`` supplies domain
        values per variable (clamps always win). Returns the final state as
        {variable: value}; with ``record`` also returns the per-sweep
        trajectory as an int8 array (sweeps, n_vars) of domain indices.
        """
        state = self.init_state.copy()
        free = np.array([v for v in range(self.n) if v not in self.graph.clamps],
                        dtype=np.int64)
        if len(free):
            state[free] = (rng.random(len(free)) < 0.5).astype(np.int8)
        if init:
            for var, value in init.items():
                idx = self.graph.var_index[var]
                if idx not in self.graph.clamps:
                    state[idx] = self.graph.domain_values(idx).index(value)
        trajectory = np.empty((sweeps, self.n), dtype=np.int8) if record else None
        for s in range(sweeps):
            self.sweep(state, rng)
            if record:
                trajectory[s] = state
        final = {var: self.graph.domain_values(i)[state[i]]
                 for i, var in enumerate(self.graph.variables)}
        if record:
            return final, trajectory
        return final


# -- generation ------------------------------------------------------------------


def generate(config: SynthConfig) -> tuple[TimeVaryingNetwork, dict]:
    """Sample a network and its complete hidden truth.

    Returns (network, truth) where truth maps every model variable to its
    sampled value; the network reveals image labels at the configured rate
    and carries Gaussian features conditioned on the sampled image labels.
    Bit-identical for identical configs.
    """
    category = as_category(config.category)
    seeds = np.random.SeedSequence(config.seed).spawn(5)
    rng_topo, rng_images, rng_gibbs, rng_feat, rng_reveal = \
        (np.random.default_rng(s) for s in seeds)

    users = [f"u{i:03d}" for i in range(config.n_users)]
    p_edge = min(1.0, config.mean_degree / max(1, config.n_users - 1))
    pairs = [(users[i], users[j])
             for i in range(config.n_users) for j in range(i + 1, config.n_users)]
    edges: list[tuple[str, str, int]] = []
    if config.dynamic_edges:
        for t in range(config.horizon):
            for (u, v) in pairs:
                if rng_topo.random() < p_edge:
                    edges.append((u, v, t))
    else:
        chosen = [pair for pair in pairs if rng_topo.random() < p_edge]
        edges = [(u, v, t) for t in range(config.horizon) for (u, v) in chosen]

    counts = rng_images.poisson(config.images_per_slice,
                                size=(config.n_users, config.horizon))
    placeholders = []
    for i, u in enumerate(users):
        for t in range(config.horizon):
            for k in range(int(counts[i, t])):
                placeholders.append(ImageRecord(f"{u}_t{t}_{k}", u, t,
                                                np.zeros(FEATURE_DIM)))
    skeleton = TimeVaryingNetwork(users, config.horizon, edges, placeholders)

    params = config.planted_params(users)
    graph = build_graph(skeleton, category, window=config.window, drop=("f2",))

    # planting is per friendship (both directions together): the tied model
    # cannot distinguish antiparallel influence on one edge, so independent
    # per-direction planting would seed unidentifiable ground truth; planting
    # whole edges keeps the planted fraction of directed edges at the
    # configured density
    undirected = sorted({tuple(sorted((v.src, v.dst))) for v in graph.variables
                         if isinstance(v, InfluenceVar)})
    planted = {edge for edge in undirected
               if rng_topo.random() < config.influence_density}
    bias = {}
    for var in graph.variables:
        if isinstance(var, InfluenceVar):
            sign = 1.0 if tuple(sorted((var.src, var.dst))) in planted else -1.0
            bias[var] = sign * config.influence_bias
        elif isinstance(var, UserVar) and config.emotion_bias:
            bias[var] = config.emotion_bias

    # structured start: one coin per user for their whole emotion chain,
    # influence at its planted tendency. Strong couplings make the sweep
    # glassy (whole-cluster flips are effectively unreachable), so a random
    # start would quench the slice layers into independent states and erase
    # the temporal structure the couplings imply; relaxing from the aligned
    # basin samples the intended mode instead.
    init: dict[VariableId, int] = {}
    coins = {u: (1 if rng_gibbs.random() < 0.5 else -1) for u in users}
    for var in graph.variables:
        if isinstance(var, UserVar):
            init[var] = coins[var.user]
        elif isinstance(var, InfluenceVar):
            init[var] = 1 if tuple(sorted((var.src, var.dst))) in planted else 0
    for rec in skeleton.iter_images():
        init[ImageVar(rec.image_id)] = coins[rec.owner]
    sampler = GibbsSampler(graph, params, bias=bias)
    truth = sampler.run(config.burn_in, rng_gibbs, init=init)

    half = 0.5 * config.feature_separation * config.feature_sigma
    direction = np.ones(FEATURE_DIM) / np.sqrt(FEATURE_DIM)
    means = {1: half * direction, -1: -half * direction}

    records = []
    for rec in skeleton.iter_images():
        label = truth[ImageVar(rec.image_id)]
        feats = means[label] + config.feature_sigma * rng_feat.normal(size=FEATURE_DIM)
        labels = {category: label} if rng_reveal.random() < config.label_rate else None
        records.append(ImageRecord(rec.image_id, rec.owner, rec.t, feats, labels))
    net = TimeVaryingNetwork(users, config.horizon, edges, records)
    return net, truth


def influence_ground_truth(truth: Mapping[VariableId, int]) -> set:
    """Directed (src, dst, t) keys whose sampled influence value is 1."""
    return {(var.src, var.dst, var.t) for var, value in truth.items()
            if isinstance(var, InfluenceVar) and value == 1}


def score_influence_recovery(predicted: Mapping[tuple, float],
                             truth_positive: set) -> float:
    """Area under the ROC curve of predicted influence weight vs truth.

    Rank-statistic formula with midranks, so ties contribute 0.5. Raises
    ValueError when the truth is single-class (AUC undefined).
    """
    keys = sorted(predicted)
    labels = np.array([k in truth_positive for k in keys])
    scores = np.array([float(predicted[k]) for k in keys])
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC undefined: influence truth is single-class")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sofar = 0
    sorted_scores = scores[order]
    while sofar < len(scores):
        upto = sofar
        while upto + 1 < len(scores) and sorted_scores[upto + 1] == sorted_scores[sofar]:
            upto += 1
        midrank = 0.5 * (sofar + upto) + 1.0
        ranks[order[sofar:upto + 1]] = midrank
        sofar = upto + 1
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


# -- truth sidecar file ------------------------------------------------------------


def save_truth(truth: Mapping[VariableId, int], path,
               planted: Optional[ParameterSet] = None,
               config: Optional[SynthConfig] = None) -> None:
    doc = {
        "assignment": {var_key(v): int(val) for v, val in sorted(
            truth.items(), key=lambda kv: var_key(kv[0]))},
    }
    if planted is not None:
        doc["planted"] = planted.to_json()
    if config is not None:
        doc["config"] = config.to_json()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        fh.write("\n")


def load_truth(path) -> tuple[dict, Optional[ParameterSet], Optional[dict]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    truth = {parse_var_key(k): int(v) for k, v in doc["assignment"].items()}
    planted = ParameterSet.from_json(doc["planted"]) if "planted" in doc else None
    return truth, planted, doc.get("config")
