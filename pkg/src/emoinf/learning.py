"""Alternating optimization: MAP decode, then gradient ascent on parameters.

The joint distribution is log-linear in the parameters once the two decay
rates are held fixed, so the packed parameter vector ``theta`` and the
sufficient-statistics vector ``phi`` satisfy ``theta . phi(q) ==
objective(q)`` exactly. The log-likelihood gradient is then
``phi(q0) - E[phi(q)]``, with the expectation taken factor by factor from
joint factor marginals (exact ones when enumeration is affordable, loopy-BP
ones otherwise). Decay rates get their own ascent step with the chain rule
through the exponential decay terms.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .factorgraph import (
    FactorGraph,
    FactorKind,
    ImageVar,
    ParameterSet,
    UserVar,
    _PAT_BIN_DIFF,
    _PAT_SOCIAL,
    _PAT_SPIN_DIFF,
    build_graph,
    objective,
)
from .inference import (
    BpConfig,
    MarginalTable,
    brute_force_marginals,
    bethe_log_partition,
    exact_log_partition,
    max_product,
    sum_product,
)
from .network import FEATURE_DIM, EmotionCategory, TimeVaryingNetwork, as_category

INIT_OWNER_COUPLING = 0.6
INIT_TEMPORAL_WEIGHT = 0.5
INIT_TEMPORAL_DECAY = 1.0
INIT_SOCIAL_WEIGHT = 0.1
INIT_STABILITY_WEIGHT = 0.5
INIT_STABILITY_DECAY = 1.0


@dataclass
class TrainConfig:
    max_outer: int = 20
    objective_tol: float = 1e-4        # relative change that counts as converged
    step_size: float = 0.05
    step2_iters: int = 10
    step3_iters: int = 5
    max_halvings: int = 5
    freeze_decay: bool = False
    exact_limit: int = 20              # enumeration cutoff for expectations
    bp: BpConfig = field(default_factory=BpConfig)
    baseline_epochs: int = 500
    baseline_step: float = 0.5
    baseline_l2: float = 1e-4

    def __post_init__(self):
        if self.max_outer < 1 or self.step2_iters < 0 or self.step3_iters < 0:
            raise ValueError("iteration counts must be positive")
        if self.step_size <= 0 or self.objective_tol <= 0:
            raise ValueError("step size and tolerance must be positive")


WEIGHT_FIELDS = ("owner_coupling", "temporal_weight", "social_weight", "stability_weight")
DECAY_FIELDS = ("temporal_decay", "stability_decay")


class ParamIndex:
    """Maps ParameterSet fields to flat coordinates.

    The weight vector is [visual(21), owner_coupling(U), temporal_weight(U),
    social_weight(U), stability_weight(U)] over the graph's sorted users;
    the decay vector is [temporal_decay(U), stability_decay(U)].
    """

    def __init__(self, users: Iterable[str]):
        self.users = tuple(sorted(users))
        self.user_pos = {u: i for i, u in enumerate(self.users)}
        u = len(self.users)
        self.n_weights = FEATURE_DIM + len(WEIGHT_FIELDS) * u
        self.n_decays = len(DECAY_FIELDS) * u

    def weight_coord(self, fieldname: str, user: str) -> int:
        block = WEIGHT_FIELDS.index(fieldname)
        return FEATURE_DIM + block * len(self.users) + self.user_pos[user]

    def decay_coord(self, fieldname: str, user: str) -> int:
        block = DECAY_FIELDS.index(fieldname)
        return block * len(self.users) + self.user_pos[user]

    def pack_weights(self, params: ParameterSet) -> np.ndarray:
        out = np.zeros(self.n_weights)
        out[:FEATURE_DIM] = params.visual
        for name in WEIGHT_FIELDS:
            table = getattr(params, name)
            for u in self.users:
                out[self.weight_coord(name, u)] = table.get(u, 0.0)
        return out

    def apply_weights(self, params: ParameterSet, vec: np.ndarray) -> ParameterSet:
        out = params.copy()
        out.visual = np.asarray(vec[:FEATURE_DIM], dtype=np.float64).copy()
        for name in WEIGHT_FIELDS:
            table = getattr(out, name)
            for u in self.users:
                table[u] = max(0.0, float(vec[self.weight_coord(name, u)]))
        return out

    def pack_decays(self, params: ParameterSet) -> np.ndarray:
        out = np.zeros(self.n_decays)
        for name in DECAY_FIELDS:
            table = getattr(params, name)
            for u in self.users:
                out[self.decay_coord(name, u)] = table.get(u, 0.0)
        return out

    def apply_decays(self, params: ParameterSet, vec: np.ndarray) -> ParameterSet:
        out = params.copy()
        for name in DECAY_FIELDS:
            table = getattr(out, name)
            for u in self.users:
                table[u] = max(0.0, float(vec[self.decay_coord(name, u)]))
        return out


_WEIGHT_OF_KIND = {
    FactorKind.IMAGE_OWNER: "owner_coupling",
    FactorKind.TEMPORAL: "temporal_weight",
    FactorKind.SOCIAL: "social_weight",
    FactorKind.STABILITY: "stability_weight",
}


def _local_pattern(kind: FactorKind) -> np.ndarray:
    if kind == FactorKind.SOCIAL:
        return _PAT_SOCIAL
    if kind == FactorKind.STABILITY:
        return _PAT_BIN_DIFF
    return _PAT_SPIN_DIFF


def sufficient_statistics(graph: FactorGraph, assignment, params: ParameterSet,
                          index: Optional[ParamIndex] = None) -> np.ndarray:
    """phi(q): per-coordinate factor sums such that theta . phi == objective.

    Decay rates are frozen inside phi, so the identity holds for the weight
    coordinates with the current decays baked in.
    """
    index = index or ParamIndex(graph.users)
    phi = np.zeros(index.n_weights)
    for factor in graph.factors:
        values = tuple(assignment[graph.variables[i]] for i in factor.vars)
        if factor.kind == FactorKind.VISUAL:
            phi[:FEATURE_DIM] += graph.features[factor.image_row] * values[0]
            continue
        pattern = _local_pattern(factor.kind)
        idx = tuple(graph.domain_values(vi).index(val)
                    for vi, val in zip(factor.vars, values))
        local = -float(pattern[idx])
        if factor.kind == FactorKind.TEMPORAL:
            local *= np.exp(-params.scalar("temporal_decay", factor.owner) * factor.gap)
        elif factor.kind == FactorKind.STABILITY:
            local *= np.exp(-params.scalar("stability_decay", factor.owner) * factor.gap)
        phi[index.weight_coord(_WEIGHT_OF_KIND[factor.kind], factor.owner)] += local
    return phi


def expected_statistics(graph: FactorGraph, marginals: MarginalTable,
                        params: ParameterSet,
                        index: Optional[ParamIndex] = None) -> np.ndarray:
    """E[phi(q)] computed term by term from joint factor marginals."""
    index = index or ParamIndex(graph.users)
    phi = np.zeros(index.n_weights)
    for fi, factor in enumerate(graph.factors):
        joint = marginals.factor_probs.get(fi)
        if joint is None:
            raise KeyError(f"missing factor marginal for factor {fi} ({factor.kind})")
        if factor.kind == FactorKind.VISUAL:
            mean_label = float(joint[1] - joint[0])
            phi[:FEATURE_DIM] += graph.features[factor.image_row] * mean_label
            continue
        local = -float((joint * _local_pattern(factor.kind)).sum())
        if factor.kind == FactorKind.TEMPORAL:
            local *= np.exp(-params.scalar("temporal_decay", factor.owner) * factor.gap)
        elif factor.kind == FactorKind.STABILITY:
            local *= np.exp(-params.scalar("stability_decay", factor.owner) * factor.gap)
        phi[index.weight_coord(_WEIGHT_OF_KIND[factor.kind], factor.owner)] += local
    return phi


def gradient_weights(graph: FactorGraph, q0, params: ParameterSet,
                     marginals: MarginalTable,
                     index: Optional[ParamIndex] = None) -> np.ndarray:
    """Log-likelihood ascent direction over the weight coordinates:
    phi(q0) - E[phi(q)]."""
    index = index or ParamIndex(graph.users)
    return (sufficient_statistics(graph, q0, params, index)
            - expected_statistics(graph, marginals, params, index))


def gradient_decays(graph: FactorGraph, q0, params: ParameterSet,
                    marginals: MarginalTable,
                    index: Optional[ParamIndex] = None) -> np.ndarray:
    """Ascent direction over the decay coordinates.

    Differentiating -w * exp(-d*g) * |delta| in d gives
    w * g * exp(-d*g) * |delta|, so each decaying factor contributes
    coefficient * (|delta(q0)| - E[|delta|]).
    """
    index = index or ParamIndex(graph.users)
    grad = np.zeros(index.n_decays)
    for fi, factor in enumerate(graph.factors):
        if factor.kind == FactorKind.TEMPORAL:
            weight = params.scalar("temporal_weight", factor.owner)
            decay = params.scalar("temporal_decay", factor.owner)
            coord = index.decay_coord("temporal_decay", factor.owner)
            pattern = _PAT_SPIN_DIFF
        elif factor.kind == FactorKind.STABILITY:
            weight = params.scalar("stability_weight", factor.owner)
            decay = params.scalar("stability_decay", factor.owner)
            coord = index.decay_coord("stability_decay", factor.owner)
            pattern = _PAT_BIN_DIFF
        else:
            continue
        joint = marginals.factor_probs.get(fi)
        if joint is None:
            raise KeyError(f"missing factor marginal for factor {fi} ({factor.kind})")
        values = tuple(q0[graph.variables[i]] for i in factor.vars)
        idx = tuple(graph.domain_values(vi).index(val)
                    for vi, val in zip(factor.vars, values))
        observed = float(pattern[idx])
        expected = float((joint * pattern).sum())
        coef = weight * factor.gap * np.exp(-decay * factor.gap)
        grad[coord] += coef * (observed - expected)
    return grad


# -- linear baseline ----------------------------------------------------------


def train_linear_baseline(examples, epochs: int = 500, step: float = 0.5,
                          l2: float = 1e-4) -> tuple[np.ndarray, float]:
    """Hinge-loss linear classifier by full-batch subgradient descent.

    ``examples`` is a sequence of (feature_vector, label) with labels in
    {-1, +1}. Returns (weights, bias); prediction is sign(w.x + b). The bias
    is not regularized. Deterministic: no sampling, fixed step decay.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("cannot train on an empty example list")
    X = np.array([np.asarray(x, dtype=np.float64) for x, _ in examples])
    y = np.array([float(l) for _, l in examples])
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    n, dim = X.shape
    w = np.zeros(dim)
    b = 0.0
    for k in range(epochs):
        margins = y * (X @ w + b)
        viol = margins < 1.0
        gw = l2 * w - (y[viol, None] * X[viol]).sum(axis=0) / n
        gb = -float(y[viol].sum()) / n
        lr = step / np.sqrt(1.0 + k)
        w -= lr * gw
        b -= lr * gb
    return w, b


def baseline_predict(w: np.ndarray, b: float, features: np.ndarray) -> int:
    return 1 if float(w @ np.asarray(features) + b) >= 0 else -1


def initialize_params(net: TimeVaryingNetwork, category: EmotionCategory,
                      labeled_images=None,
                      config: Optional[TrainConfig] = None) -> ParameterSet:
    """Starting parameters: baseline weights for the visual block, fixed
    constants for every per-user scalar.

    With no labeled images the visual block falls back to zeros and a
    warning is emitted.
    """
    category = as_category(category)
    config = config or TrainConfig()
    if labeled_images is None:
        labeled_images = net.labeled_images(category)
    if labeled_images:
        examples = [(rec.features, rec.label_for(category)) for rec in labeled_images]
        visual, _ = train_linear_baseline(examples, epochs=config.baseline_epochs,
                                          step=config.baseline_step, l2=config.baseline_l2)
    else:
        warnings.warn(f"no labeled images for {category}; visual weights start at zero")
        visual = np.zeros(FEATURE_DIM)
    return ParameterSet.constant(
        net.users, visual=visual,
        owner_coupling=INIT_OWNER_COUPLING,
        temporal_weight=INIT_TEMPORAL_WEIGHT,
        temporal_decay=INIT_TEMPORAL_DECAY,
        social_weight=INIT_SOCIAL_WEIGHT,
        stability_weight=INIT_STABILITY_WEIGHT,
        stability_decay=INIT_STABILITY_DECAY,
    )


# -- the alternating fit -------------------------------------------------------


@dataclass
class FitResult:
    params: ParameterSet
    assignment: dict
    marginals: MarginalTable
    trace: list[dict]
    graph: FactorGraph
    converged: bool


def _marginals_for(graph, params, config: TrainConfig):
    if graph.n_unclamped <= config.exact_limit:
        return brute_force_marginals(graph, params)
    marg, _, _ = sum_product(graph, params, config.bp)
    return marg


def _surrogate(graph, params, q0, config: TrainConfig,
               marginals: Optional[MarginalTable] = None) -> float:
    """log p(q0 | params): exact where enumeration is affordable, else the
    Bethe estimate of the partition function."""
    if graph.n_unclamped <= config.exact_limit:
        logz = exact_log_partition(graph, params)
    else:
        if marginals is None:
            marginals, _, _ = sum_product(graph, params, config.bp)
        logz = bethe_log_partition(graph, params, marginals)
    return objective(graph, q0, params) - logz


def _ascend(graph, params, q0, config, index, gradient_fn, apply_fn):
    """One projected gradient-ascent step with step halving on decrease."""
    marginals = _marginals_for(graph, params, config)
    grad = gradient_fn(graph, q0, params, marginals, index)
    if not np.any(grad):
        return params, 0.0, True
    before = _surrogate(graph, params, q0, config, marginals)
    step = config.step_size
    for _ in range(config.max_halvings + 1):
        candidate = apply_fn(params, step * grad)
        after = _surrogate(graph, candidate, q0, config)
        if after >= before - 1e-12:
            return candidate, step, False
        step *= 0.5
    return params, 0.0, True  # no ascent at the smallest step


def fit(net: TimeVaryingNetwork, category: EmotionCategory,
        config: Optional[TrainConfig] = None, window: int = 1,
        drop: Iterable = ()) -> FitResult:
    """Alternating MAP inference and parameter estimation on one category.

    Each outer iteration (1) decodes all unclamped variables by max-product
    with parameters fixed, (2) runs projected gradient ascent on the weight
    parameters with decays fixed, (3) runs gradient ascent on the decay
    rates (skipped when ``freeze_decay``). Stops when the relative change of
    the log-likelihood surrogate drops below the tolerance.
    """
    config = config or TrainConfig()
    category = as_category(category)
    graph = build_graph(net, category, window=window, drop=drop)
    params = initialize_params(net, category, config=config)
    index = ParamIndex(graph.users)

    def apply_weights(p, delta):
        return index.apply_weights(p, index.pack_weights(p) + delta)

    def apply_decays(p, delta):
        return index.apply_decays(p, index.pack_decays(p) + delta)

    trace: list[dict] = []
    last_obj = None
    converged = False
    assignment: dict = {}
    for outer in range(config.max_outer):
        assignment, map_conv, residual = max_product(graph, params, config.bp)

        step2_used = 0.0
        for _ in range(config.step2_iters):
            params, used, stalled = _ascend(graph, params, assignment, config,
                                            index, gradient_weights, apply_weights)
            step2_used = used or step2_used
            if stalled:
                break
        step3_used = 0.0
        if not config.freeze_decay:
            for _ in range(config.step3_iters):
                params, used, stalled = _ascend(graph, params, assignment, config,
                                                index, gradient_decays, apply_decays)
                step3_used = used or step3_used
                if stalled:
                    break

        current = _surrogate(graph, params, assignment, config)
        trace.append({
            "iteration": outer,
            "objective": current,
            "map_converged": map_conv,
            "bp_residual": residual,
            "step2_step": step2_used,
            "step3_step": step3_used,
        })
        if last_obj is not None:
            if abs(current - last_obj) <= config.objective_tol * max(1.0, abs(last_obj)):
                converged = True
                break
        last_obj = current

    marginals = _marginals_for(graph, params, config)
    assignment, _, _ = max_product(graph, params, config.bp)
    return FitResult(params=params, assignment=assignment, marginals=marginals,
                     trace=trace, graph=graph, converged=converged)


# -- prediction ----------------------------------------------------------------


@dataclass
class PredictionResult:
    category: EmotionCategory
    window: int
    image_probs: dict
    image_map: dict
    user_probs: dict
    user_map: dict
    influence: dict          # (src, dst, t) -> weight in [0, 1]
    converged: bool
    residual: float


def predict(net: TimeVaryingNetwork, params: ParameterSet,
            category: EmotionCategory, window: int = 1,
            bp: Optional[BpConfig] = None,
            exact_limit: int = 20) -> PredictionResult:
    """Probabilities and MAP labels for every variable of one category.

    Labels present in ``net`` act as clamps; hold labels out by masking them
    first (see ``mask_image_labels``). Influence weights cover every directed
    edge occurrence; edge slices with no influence variable (an endpoint
    never uploads near that slice) default to the uninformative 0.5.
    """
    category = as_category(category)
    bp = bp or BpConfig()
    graph = build_graph(net, category, window=window)
    if graph.n_unclamped <= exact_limit:
        marginals = brute_force_marginals(graph, params)
        converged, residual = True, 0.0
    else:
        marginals, converged, residual = sum_product(graph, params, bp)
    assignment, _, _ = max_product(graph, params, bp)

    image_probs, image_map = {}, {}
    user_probs, user_map = {}, {}
    influence = {}
    for var, probs in marginals.var_probs.items():
        if isinstance(var, ImageVar):
            image_probs[var.image_id] = float(probs[1])
            image_map[var.image_id] = assignment[var]
        elif isinstance(var, UserVar):
            user_probs[(var.user, var.t)] = float(probs[1])
            user_map[(var.user, var.t)] = assignment[var]
        else:
            influence[(var.src, var.dst, var.t)] = float(probs[1])
    for t in range(net.horizon):
        for (u, v) in sorted(net.edges_at(t)):
            for key in ((u, v, t), (v, u, t)):
                influence.setdefault(key, 0.5)
    return PredictionResult(category=category, window=window,
                            image_probs=image_probs, image_map=image_map,
                            user_probs=user_probs, user_map=user_map,
                            influence=influence, converged=converged,
                            residual=residual)


# -- persistence ----------------------------------------------------------------


def save_params(params: ParameterSet, path, category: EmotionCategory,
                window: int, meta: Optional[dict] = None) -> None:
    doc = {
        "category": as_category(category).value,
        "window": int(window),
        "params": params.to_json(),
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
        fh.write("\n")


def load_params(path) -> tuple[ParameterSet, EmotionCategory, int, dict]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return (ParameterSet.from_json(doc["params"]), as_category(doc["category"]),
            int(doc["window"]), doc.get("meta", {}))


def write_trace_csv(trace: list[dict], path) -> None:
    fields = ["iteration", "objective", "map_converged", "bp_residual",
              "step2_step", "step3_step"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in trace:
            writer.writerow({k: row.get(k, "") for k in fields})
