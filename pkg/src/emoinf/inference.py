"""Loopy belief propagation (max-product and sum-product) and exact oracles.

Messages live in log-space and are normalized every update (peak 0 for
max-product, log-sum 0 for sum-product). Clamped variables are folded into
the factor tables before message passing, so a clamped variable costs
nothing at inference time while its factors keep shaping its neighbors.

The brute-force functions enumerate every assignment of the unclamped
variables; they are the test oracles and the only place the partition
function is computed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .factorgraph import FactorGraph, ParameterSet, VariableId

BRUTE_FORCE_LIMIT = 20


@dataclass
class BpConfig:
    max_iterations: int = 100
    damping: float = 0.3
    tolerance: float = 1e-6
    schedule: str = "sequential"  # or "synchronous"

    def __post_init__(self):
        if not (0.0 <= self.damping < 1.0):
            raise ValueError(f"damping must be in [0, 1), got {self.damping}")
        if self.max_iterations < 1 or self.tolerance <= 0:
            raise ValueError("max_iterations must be >= 1 and tolerance > 0")
        if self.schedule not in ("sequential", "synchronous"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


@dataclass
class MarginalTable:
    """Per-variable and per-factor marginal probabilities.

    ``var_probs[v]`` is a length-2 array over the variable's domain in
    ascending order; ``factor_probs[i]`` is the joint table of factor ``i``
    over its full variable tuple. Clamped variables appear as point masses.
    """

    var_probs: dict[VariableId, np.ndarray] = field(default_factory=dict)
    factor_probs: dict[int, np.ndarray] = field(default_factory=dict)
    residual: float = 0.0

    def prob_high(self, var: VariableId) -> float:
        """P(+1) for emotion variables, P(1) for influence variables."""
        if var not in self.var_probs:
            raise KeyError(f"unknown variable {var}")
        return float(self.var_probs[var][1])


def predict_probability(marginals: MarginalTable, var: VariableId) -> float:
    """Probability of the positive/active value of one variable."""
    return marginals.prob_high(var)


def _logsumexp2(a: np.ndarray, axis: int) -> np.ndarray:
    lo = np.take(a, 0, axis=axis)
    hi = np.take(a, 1, axis=axis)
    return np.logaddexp(lo, hi)


def _reduce_keep(table: np.ndarray, keep_axis: int, use_max: bool) -> np.ndarray:
    """Reduce every axis except ``keep_axis`` (sum-product or max-product)."""
    out = table
    axis = 0
    target = keep_axis
    while out.ndim > 1:
        if axis == target:
            axis += 1
            continue
        out = out.max(axis=axis) if use_max else _logsumexp2(out, axis=axis)
        if axis < target:
            target -= 1
    return out


class _Engine:
    """One inference run over a compiled, clamp-reduced graph.

    Factors surviving clamp reduction with arity >= 2 are grouped by arity
    into stacked tables so a synchronous sweep is a handful of array ops;
    the sequential schedule walks the same storage one factor at a time in
    deterministic graph order.
    """

    def __init__(self, graph: FactorGraph, params: ParameterSet, use_max: bool):
        self.graph = graph
        self.use_max = use_max
        tables = graph.compile_tables(params)
        self.free = graph.unclamped_indices()
        self.fpos = {vi: j for j, vi in enumerate(self.free)}
        n = len(self.free)
        self.n = n

        self.base = np.zeros((n, 2))
        self.const = 0.0
        self.reduced: list[tuple[tuple[int, ...], np.ndarray]] = []
        seq = []
        for fi, (factor, table) in enumerate(zip(graph.factors, tables)):
            slicer, positions = [], []
            for vi in factor.vars:
                if vi in graph.clamps:
                    slicer.append(graph.clamps[vi])
                else:
                    slicer.append(slice(None))
                    positions.append(self.fpos[vi])
            red = np.asarray(table[tuple(slicer)], dtype=np.float64)
            self.reduced.append((tuple(positions), red))
            if red.ndim == 0:
                self.const += float(red)
            elif red.ndim == 1:
                self.base[positions[0]] += red
            else:
                seq.append((fi, tuple(positions), red))

        # stacked per-arity storage; self.msgs[a] has shape (K_a, a, 2)
        self.order = []          # (arity, row) in original factor order
        self.row_of = {}         # factor index -> (arity, row)
        self.vpos: dict[int, np.ndarray] = {}
        self.tabs: dict[int, np.ndarray] = {}
        self.msgs: dict[int, np.ndarray] = {}
        for arity in (2, 3):
            members = [(fi, pos, red) for fi, pos, red in seq if red.ndim == arity]
            if not members:
                continue
            self.vpos[arity] = np.array([pos for _, pos, _ in members], dtype=np.int64)
            self.tabs[arity] = np.stack([red for _, _, red in members])
            self.msgs[arity] = np.zeros((len(members), arity, 2))
            for row, (fi, _, _) in enumerate(members):
                self.row_of[fi] = (arity, row)
                self.order.append((arity, row))

    # -- schedules ----------------------------------------------------------

    def run(self, config: BpConfig) -> tuple[bool, float]:
        self.residuals: list[float] = []
        if not self.order:
            return True, 0.0
        if config.schedule == "synchronous":
            step = self._sweep_synchronous
        else:
            step = self._sweep_sequential
        residual = np.inf
        for _ in range(config.max_iterations):
            residual = step(config.damping)
            self.residuals.append(residual)
            if residual < config.tolerance:
                return True, residual
        return False, residual

    def _beliefs(self) -> np.ndarray:
        belief = self.base.copy()
        for arity, msg in self.msgs.items():
            flat = self.vpos[arity].ravel()
            for d in (0, 1):
                belief[:, d] += np.bincount(flat, weights=msg[:, :, d].ravel(),
                                            minlength=self.n)
        return belief

    def _reduce_stack(self, acc: np.ndarray, keep_axis: int) -> np.ndarray:
        """Reduce an acc of shape (K, 2, ..., 2) to (K, 2) keeping one axis."""
        axis = 1
        target = keep_axis + 1
        out = acc
        while out.ndim > 2:
            if axis == target:
                axis += 1
                continue
            out = out.max(axis=axis) if self.use_max else _logsumexp2(out, axis=axis)
            if axis < target:
                target -= 1
        return out

    def _stack_messages(self, arity: int, incoming: np.ndarray) -> np.ndarray:
        """New outgoing messages for a whole arity group; incoming (K, a, 2)."""
        table = self.tabs[arity]
        out = np.empty_like(incoming)
        for slot in range(arity):
            acc = table
            for j in range(arity):
                if j == slot:
                    continue
                shape = [len(incoming), 1, 1, 1][:arity + 1]
                shape[j + 1] = 2
                acc = acc + incoming[:, j].reshape(shape)
            msg = self._reduce_stack(acc, slot)
            if self.use_max:
                msg = msg - msg.max(axis=1, keepdims=True)
            else:
                msg = msg - np.logaddexp(msg[:, :1], msg[:, 1:])
            out[:, slot] = msg
        return out

    def _sweep_synchronous(self, damping: float) -> float:
        belief = self._beliefs()
        worst = 0.0
        updated = {}
        for arity, old in self.msgs.items():
            incoming = belief[self.vpos[arity]] - old
            new = self._stack_messages(arity, incoming)
            if damping:
                new = (1.0 - damping) * new + damping * old
            worst = max(worst, float(np.abs(new - old).max()))
            updated[arity] = new
        self.msgs = updated
        return worst

    def _sweep_sequential(self, damping: float) -> float:
        belief = self._beliefs()
        worst = 0.0
        for arity, row in self.order:
            pos = self.vpos[arity][row]
            old = self.msgs[arity][row]
            table = self.tabs[arity][row]
            incoming = belief[pos] - old
            new = np.empty_like(old)
            for slot in range(arity):
                acc = table
                for j in range(arity):
                    if j == slot:
                        continue
                    shape = [1] * arity
                    shape[j] = 2
                    acc = acc + incoming[j].reshape(shape)
                msg = _reduce_keep(acc, slot, self.use_max)
                if self.use_max:
                    msg = msg - msg.max()
                else:
                    msg = msg - np.logaddexp(msg[0], msg[1])
                new[slot] = msg
            if damping:
                new = (1.0 - damping) * new + damping * old
            delta = new - old
            worst = max(worst, float(np.abs(delta).max()))
            for slot, p in enumerate(pos):
                belief[p] += delta[slot]
            self.msgs[arity][row] = new
        return worst

    # -- read-outs ----------------------------------------------------------

    def decode(self) -> dict[VariableId, int]:
        belief = self._beliefs()
        out: dict[VariableId, int] = {}
        for j, vi in enumerate(self.free):
            var = self.graph.variables[vi]
            # ties break to the low domain value
            idx = 1 if belief[j, 1] > belief[j, 0] else 0
            out[var] = self.graph.domain_values(vi)[idx]
        for vi, didx in self.graph.clamps.items():
            var = self.graph.variables[vi]
            out[var] = self.graph.domain_values(vi)[didx]
        return out

    def marginals(self, residual: float) -> MarginalTable:
        belief = self._beliefs()
        table = MarginalTable(residual=residual)
        for j, vi in enumerate(self.free):
            b = belief[j]
            b = b - np.logaddexp(b[0], b[1])
            table.var_probs[self.graph.variables[vi]] = np.exp(b)
        for vi, didx in self.graph.clamps.items():
            point = np.zeros(2)
            point[didx] = 1.0
            table.var_probs[self.graph.variables[vi]] = point

        for fi, factor in enumerate(self.graph.factors):
            positions, red = self.reduced[fi]
            if red.ndim == 0:
                joint_red = np.ones(())
            elif red.ndim == 1:
                b = belief[positions[0]]
                joint_red = np.exp(b - np.logaddexp(b[0], b[1]))
            else:
                arity, row = self.row_of[fi]
                incoming = belief[self.vpos[arity][row]] - self.msgs[arity][row]
                acc = red.copy()
                for j in range(red.ndim):
                    shape = [1] * red.ndim
                    shape[j] = 2
                    acc = acc + incoming[j].reshape(shape)
                acc = acc - acc.max()
                joint_red = np.exp(acc)
                joint_red = joint_red / joint_red.sum()
            table.factor_probs[fi] = self._expand_joint(factor, joint_red)
        return table

    def _expand_joint(self, factor, joint_red: np.ndarray) -> np.ndarray:
        """Re-inflate a clamp-reduced joint to the factor's full domain."""
        full = np.zeros((2,) * len(factor.vars))
        slicer = []
        for vi in factor.vars:
            if vi in self.graph.clamps:
                slicer.append(self.graph.clamps[vi])
            else:
                slicer.append(slice(None))
        full[tuple(slicer)] = joint_red
        return full


def max_product(graph: FactorGraph, params: ParameterSet,
                config: Optional[BpConfig] = None):
    """MAP decoding by max-product belief propagation.

    Returns (assignment, converged, residual). Non-convergence returns the
    best-effort decode rather than failing; ties decode to the lower domain
    value (-1 or 0).
    """
    config = config or BpConfig()
    engine = _Engine(graph, params, use_max=True)
    converged, residual = engine.run(config)
    return engine.decode(), converged, residual


def sum_product(graph: FactorGraph, params: ParameterSet,
                config: Optional[BpConfig] = None):
    """Marginal inference by sum-product belief propagation.

    Returns (MarginalTable, converged, residual); exact on trees.
    """
    config = config or BpConfig()
    engine = _Engine(graph, params, use_max=False)
    converged, residual = engine.run(config)
    return engine.marginals(residual), converged, residual


def bp_residual_trajectory(graph: FactorGraph, params: ParameterSet,
                           config: Optional[BpConfig] = None,
                           use_max: bool = False) -> list[float]:
    """Per-iteration max message change, for convergence diagnostics."""
    config = config or BpConfig()
    engine = _Engine(graph, params, use_max=use_max)
    engine.run(config)
    return list(engine.residuals)


def write_residuals_csv(residuals: list[float], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,residual\n")
        for i, r in enumerate(residuals):
            fh.write(f"{i},{r!r}\n")


def marginals_to_json(graph: FactorGraph, marginals: MarginalTable) -> dict:
    """Per-variable positive-value probabilities keyed by variable id."""
    from .factorgraph import var_key
    return {var_key(v): float(p[1]) for v, p in sorted(
        marginals.var_probs.items(), key=lambda kv: var_key(kv[0]))}


def assignment_to_json(assignment: Mapping[VariableId, int]) -> dict:
    from .factorgraph import var_key
    return {var_key(v): int(val) for v, val in sorted(
        assignment.items(), key=lambda kv: var_key(kv[0]))}


# -- exact enumeration oracles ------------------------------------------------


def _enumerate_scores(graph: FactorGraph, params: ParameterSet):
    free = graph.unclamped_indices()
    n = len(free)
    if n > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"graph too large for enumeration: {n} unclamped variables "
            f"(limit {BRUTE_FORCE_LIMIT})")
    count = 1 << n
    shifts = np.arange(n - 1, -1, -1)
    assigns = ((np.arange(count)[:, None] >> shifts[None, :]) & 1).astype(np.int64)
    pos = {vi: j for j, vi in enumerate(free)}
    tables = graph.compile_tables(params)
    scores = np.zeros(count)
    for factor, table in zip(graph.factors, tables):
        index = tuple(
            np.full(count, graph.clamps[vi], dtype=np.int64) if vi in graph.clamps
            else assigns[:, pos[vi]]
            for vi in factor.vars
        )
        scores += table[index]
    return free, assigns, scores


def brute_force_map(graph: FactorGraph, params: ParameterSet) -> dict:
    """Exact MAP by enumeration; ties resolve to the lexicographically
    smallest assignment over ascending domain values (the same preference
    max-product uses per variable)."""
    free, assigns, scores = _enumerate_scores(graph, params)
    best = int(np.argmax(scores))  # first maximum = lexicographically smallest
    out: dict[VariableId, int] = {}
    for j, vi in enumerate(free):
        out[graph.variables[vi]] = graph.domain_values(vi)[assigns[best, j]]
    for vi, didx in graph.clamps.items():
        out[graph.variables[vi]] = graph.domain_values(vi)[didx]
    return out


def exact_log_partition(graph: FactorGraph, params: ParameterSet) -> float:
    """log of the normalization constant, summed over unclamped assignments."""
    _, _, scores = _enumerate_scores(graph, params)
    peak = scores.max()
    return float(peak + np.log(np.exp(scores - peak).sum()))


def brute_force_marginals(graph: FactorGraph, params: ParameterSet) -> MarginalTable:
    """Exact per-variable and per-factor marginals by full enumeration."""
    free, assigns, scores = _enumerate_scores(graph, params)
    peak = scores.max()
    weights = np.exp(scores - peak)
    probs = weights / weights.sum()

    table = MarginalTable(residual=0.0)
    for j, vi in enumerate(free):
        p1 = float(probs[assigns[:, j] == 1].sum())
        table.var_probs[graph.variables[vi]] = np.array([1.0 - p1, p1])
    for vi, didx in graph.clamps.items():
        point = np.zeros(2)
        point[didx] = 1.0
        table.var_probs[graph.variables[vi]] = point

    pos = {vi: j for j, vi in enumerate(free)}
    for fi, factor in enumerate(graph.factors):
        arity = len(factor.vars)
        flat = np.zeros(len(probs), dtype=np.int64)
        for vi in factor.vars:
            col = (np.full(len(probs), graph.clamps[vi], dtype=np.int64)
                   if vi in graph.clamps else assigns[:, pos[vi]])
            flat = flat * 2 + col
        joint = np.bincount(flat, weights=probs, minlength=2 ** arity)
        table.factor_probs[fi] = joint.reshape((2,) * arity)
    return table


# -- partition-function estimates ---------------------------------------------


def bethe_log_partition(graph: FactorGraph, params: ParameterSet,
                        marginals: MarginalTable) -> float:
    """Bethe free-energy estimate of the log partition from BP marginals.

    Exact on trees at a BP fixed point; an approximation on loopy graphs.
    Clamped variables contribute through the reduced factor tables only.
    """

    def entropy(p: np.ndarray) -> float:
        p = p[p > 1e-300]
        return float(-(p * np.log(p)).sum())

    tables = graph.compile_tables(params)
    free = set(graph.unclamped_indices())
    logz = 0.0
    degree: dict[int, int] = {}
    for fi, factor in enumerate(graph.factors):
        slicer, positions = [], []
        for vi in factor.vars:
            if vi in graph.clamps:
                slicer.append(graph.clamps[vi])
            else:
                slicer.append(slice(None))
                positions.append(vi)
        red = np.asarray(tables[fi][tuple(slicer)], dtype=np.float64)
        if red.ndim == 0:
            logz += float(red)
            continue
        joint = np.asarray(marginals.factor_probs[fi][tuple(slicer)], dtype=np.float64)
        total = joint.sum()
        if total > 0:
            joint = joint / total
        logz += float((joint * red).sum()) + entropy(joint.ravel())
        for vi in positions:
            degree[vi] = degree.get(vi, 0) + 1
    for vi in free:
        h = entropy(np.asarray(marginals.var_probs[graph.variables[vi]]))
        logz -= (degree.get(vi, 0) - 1) * h
    return logz


def log_partition_estimate(graph: FactorGraph, params: ParameterSet,
                           marginals: Optional[MarginalTable] = None,
                           config: Optional[BpConfig] = None,
                           exact_limit: int = BRUTE_FORCE_LIMIT) -> float:
    """Exact log partition when enumeration is affordable, Bethe otherwise."""
    if graph.n_unclamped <= exact_limit:
        return exact_log_partition(graph, params)
    if marginals is None:
        marginals, _, _ = sum_product(graph, params, config)
    return bethe_log_partition(graph, params, marginals)
