"""Dynamic factor graph over image emotions, user emotions, and influence.

Variables:

* ``ImageVar``     -- per-image emotion, domain {-1, +1}
* ``UserVar``      -- per-(user, slice) emotion, domain {-1, +1}
* ``InfluenceVar`` -- directed per-(src, dst, slice) influence, domain {0, 1}

Factor kinds and their log-potentials (all parameters are non-negative;
``g`` is the slice gap between the two linked times):

* ``IMAGE_OWNER``  image/owner agreement    -b * |y_owner - y_image|
* ``VISUAL``       feature evidence          (w . x) * y_image
* ``TEMPORAL``     self-persistence         -q * exp(-d*g) * |y_t - y_t'|
* ``SOCIAL``       influence coupling       -s * |1 - mu - |y_src - y_dst||
* ``STABILITY``    influence persistence    -e * exp(-r*g) * |mu_t - mu_t'|

The SOCIAL table makes agreement free under influence (mu=1), charges a
flat cost when there is no influence, and charges double for disagreeing
under influence -- so observed agreement is evidence for influence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, NamedTuple, Optional, Union

import numpy as np

from .network import (
    FEATURE_DIM,
    EmotionCategory,
    TimeVaryingNetwork,
    as_category,
)


class FactorKind(str, Enum):
    IMAGE_OWNER = "image-owner"
    VISUAL = "visual"
    TEMPORAL = "temporal"
    SOCIAL = "social"
    STABILITY = "stability"

    def __str__(self) -> str:
        return self.value


# terse aliases accepted on the CLI and in ablation specs
KIND_ALIASES = {
    "f1": FactorKind.IMAGE_OWNER,
    "f2": FactorKind.VISUAL,
    "f3": FactorKind.TEMPORAL,
    "f4": FactorKind.SOCIAL,
    "f5": FactorKind.STABILITY,
}


def as_kind(value) -> FactorKind:
    if isinstance(value, FactorKind):
        return value
    key = str(value).lower()
    if key in KIND_ALIASES:
        return KIND_ALIASES[key]
    return FactorKind(key)


class ImageVar(NamedTuple):
    image_id: str


class UserVar(NamedTuple):
    user: str
    t: int


class InfluenceVar(NamedTuple):
    src: str
    dst: str
    t: int


VariableId = Union[ImageVar, UserVar, InfluenceVar]

# domain index 0 is the "low" value used for deterministic tie-breaking
SPIN_DOMAIN = (-1, 1)
BINARY_DOMAIN = (0, 1)


def domain_of(var: VariableId) -> tuple[int, int]:
    return BINARY_DOMAIN if isinstance(var, InfluenceVar) else SPIN_DOMAIN


def var_key(var: VariableId) -> str:
    """Stable string key for JSON exports."""
    if isinstance(var, ImageVar):
        return f"image:{var.image_id}"
    if isinstance(var, UserVar):
        return f"user:{var.user}:{var.t}"
    return f"influence:{var.src}:{var.dst}:{var.t}"


def parse_var_key(key: str) -> VariableId:
    kind, _, rest = key.partition(":")
    if kind == "image":
        return ImageVar(rest)
    if kind == "user":
        user, _, t = rest.rpartition(":")
        return UserVar(user, int(t))
    if kind == "influence":
        src, dst, t = rest.split(":")
        return InfluenceVar(src, dst, int(t))
    raise ValueError(f"unrecognized variable key {key!r}")


@dataclass
class ParameterSet:
    """Model parameters: a shared visual weight vector plus per-user scalars.

    All scalar weights are penalty strengths and are projected to be
    non-negative on construction and on every load.
    """

    visual: np.ndarray
    owner_coupling: dict[str, float] = field(default_factory=dict)      # image/owner
    temporal_weight: dict[str, float] = field(default_factory=dict)
    temporal_decay: dict[str, float] = field(default_factory=dict)
    social_weight: dict[str, float] = field(default_factory=dict)
    stability_weight: dict[str, float] = field(default_factory=dict)
    stability_decay: dict[str, float] = field(default_factory=dict)

    SCALAR_FIELDS = (
        "owner_coupling", "temporal_weight", "temporal_decay",
        "social_weight", "stability_weight", "stability_decay",
    )

    def __post_init__(self):
        vec = np.asarray(self.visual, dtype=np.float64)
        if vec.shape != (FEATURE_DIM,):
            raise ValueError(f"visual weights must have {FEATURE_DIM} entries, got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("visual weights must be finite")
        self.visual = vec
        for name in self.SCALAR_FIELDS:
            table = getattr(self, name)
            setattr(self, name, {u: max(0.0, float(v)) for u, v in table.items()})

    @classmethod
    def constant(cls, users: Iterable[str], *, visual=None, owner_coupling=0.6,
                 temporal_weight=0.5, temporal_decay=1.0, social_weight=0.1,
                 stability_weight=0.5, stability_decay=1.0) -> "ParameterSet":
        users = list(users)
        if visual is None:
            visual = np.zeros(FEATURE_DIM)
        return cls(
            visual=visual,
            owner_coupling={u: owner_coupling for u in users},
            temporal_weight={u: temporal_weight for u in users},
            temporal_decay={u: temporal_decay for u in users},
            social_weight={u: social_weight for u in users},
            stability_weight={u: stability_weight for u in users},
            stability_decay={u: stability_decay for u in users},
        )

    def copy(self) -> "ParameterSet":
        return ParameterSet(
            visual=self.visual.copy(),
            **{name: dict(getattr(self, name)) for name in self.SCALAR_FIELDS},
        )

    def scalar(self, name: str, user: str, default: float = 0.0) -> float:
        return getattr(self, name).get(user, default)

    def to_json(self) -> dict:
        return {
            "visual": [float(x) for x in self.visual],
            **{name: {u: float(v) for u, v in sorted(getattr(self, name).items())}
               for name in self.SCALAR_FIELDS},
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ParameterSet":
        return cls(visual=np.asarray(obj["visual"], dtype=np.float64),
                   **{name: dict(obj.get(name, {})) for name in cls.SCALAR_FIELDS})


# -- factor log-potentials ---------------------------------------------------


def image_owner_logpot(y_image: int, y_owner: int, coupling: float) -> float:
    """Log-potential tying an image's emotion to its owner's emotion."""
    return -coupling * abs(y_owner - y_image)


def visual_logpot(x: np.ndarray, y_image: int, weights: np.ndarray) -> float:
    """Feature-evidence log-potential; antisymmetric in the image label."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x.shape != weights.shape:
        raise ValueError(f"feature/weight dimension mismatch: {x.shape} vs {weights.shape}")
    return float(weights @ x) * y_image


def temporal_logpot(y_prev: int, y_cur: int, weight: float, decay: float,
                    gap: int) -> float:
    """Self-persistence log-potential with exponential decay over the gap."""
    if gap < 1:
        raise ValueError(f"temporal gap must be >= 1, got {gap}")
    return -weight * np.exp(-decay * gap) * abs(y_cur - y_prev)


def social_logpot(y_src: int, y_dst: int, influence: int, weight: float) -> float:
    """Influence-coupling log-potential over (source, destination, influence)."""
    if influence not in (0, 1):
        raise ValueError(f"influence value must be 0 or 1, got {influence}")
    return -weight * abs(1 - influence - abs(y_src - y_dst))


def stability_logpot(mu_prev: int, mu_cur: int, weight: float, decay: float,
                     gap: int) -> float:
    """Influence-persistence log-potential with exponential decay."""
    if gap < 1:
        raise ValueError(f"stability gap must be >= 1, got {gap}")
    return -weight * np.exp(-decay * gap) * abs(mu_cur - mu_prev)


class Factor(NamedTuple):
    """One factor: kind, attached variable indices, parameter owner, time gap.

    ``image_row`` indexes the graph's feature matrix for VISUAL factors
    (-1 otherwise). Variable order inside ``vars`` is fixed per kind:
    IMAGE_OWNER (image, owner), TEMPORAL (earlier, later),
    SOCIAL (src, dst, influence), STABILITY (earlier, later).
    """

    kind: FactorKind
    vars: tuple[int, ...]
    owner: str
    gap: int = 0
    image_row: int = -1


_ARITY = {
    FactorKind.IMAGE_OWNER: 2,
    FactorKind.VISUAL: 1,
    FactorKind.TEMPORAL: 2,
    FactorKind.SOCIAL: 3,
    FactorKind.STABILITY: 2,
}

# shared penalty patterns over domain indices (index 0 = low value)
_PAT_SPIN_DIFF = np.array([[0.0, 2.0], [2.0, 0.0]])
_PAT_BIN_DIFF = np.array([[0.0, 1.0], [1.0, 0.0]])
_PAT_SOCIAL = np.empty((2, 2, 2))
for _a in (0, 1):
    for _b in (0, 1):
        for _m in (0, 1):
            _PAT_SOCIAL[_a, _b, _m] = abs(1 - _m - 2 * (_a != _b))


class FactorGraph:
    """Immutable bipartite graph of variables and factors.

    Built either from a network via :func:`build_graph` or directly from
    variable/factor lists (as the test oracles do). Clamped variables carry a
    fixed observed value and are treated as constants by inference, while
    their factors keep contributing to neighbors.
    """

    def __init__(self, variables: Iterable[VariableId],
                 factors: Iterable[Factor],
                 clamps: Optional[Mapping[VariableId, int]] = None,
                 features: Optional[np.ndarray] = None):
        self.variables: tuple[VariableId, ...] = tuple(variables)
        self.var_index: dict[VariableId, int] = {v: i for i, v in enumerate(self.variables)}
        if len(self.var_index) != len(self.variables):
            raise ValueError("duplicate variable ids")
        self.factors: tuple[Factor, ...] = tuple(factors)
        self.features = (np.zeros((0, FEATURE_DIM)) if features is None
                         else np.asarray(features, dtype=np.float64))

        self.clamps: dict[int, int] = {}
        if clamps:
            for var, value in clamps.items():
                idx = self.var_index[var]
                domain = domain_of(var)
                if value not in domain:
                    raise ValueError(f"clamp value {value} invalid for {var}")
                self.clamps[idx] = domain.index(value)

        users = set()
        for f in self.factors:
            users.add(f.owner)
            arity = _ARITY[f.kind]
            if len(f.vars) != arity:
                raise ValueError(f"{f.kind} factor must attach {arity} variables, got {len(f.vars)}")
            if f.kind == FactorKind.VISUAL and not (0 <= f.image_row < len(self.features)):
                raise ValueError("visual factor with missing feature row")
        self.users: tuple[str, ...] = tuple(sorted(users))

    # -- bookkeeping -------------------------------------------------------

    @property
    def n_unclamped(self) -> int:
        return len(self.variables) - len(self.clamps)

    def unclamped_indices(self) -> list[int]:
        return [i for i in range(len(self.variables)) if i not in self.clamps]

    def domain_values(self, idx: int) -> tuple[int, int]:
        return domain_of(self.variables[idx])

    def counts(self) -> dict:
        """Variable/factor counts by kind, for debugging and JSON export."""
        vkinds = {"image": 0, "user": 0, "influence": 0}
        for v in self.variables:
            if isinstance(v, ImageVar):
                vkinds["image"] += 1
            elif isinstance(v, UserVar):
                vkinds["user"] += 1
            else:
                vkinds["influence"] += 1
        fkinds: dict[str, int] = {}
        for f in self.factors:
            fkinds[f.kind.value] = fkinds.get(f.kind.value, 0) + 1
        return {
            "variables": vkinds,
            "factors": fkinds,
            "clamped": len(self.clamps),
            "unclamped": self.n_unclamped,
        }

    def stats_json(self) -> str:
        return json.dumps(self.counts(), sort_keys=True, indent=2)

    def to_text(self) -> str:
        """Adjacency dump with one line per variable and factor (golden tests)."""
        lines = []
        for i, v in enumerate(self.variables):
            clamp = "-"
            if i in self.clamps:
                clamp = str(self.domain_values(i)[self.clamps[i]])
            kind = "binary" if isinstance(v, InfluenceVar) else "spin"
            lines.append(f"var {var_key(v)} domain={kind} clamp={clamp}")
        for f in self.factors:
            names = " ".join(var_key(self.variables[i]) for i in f.vars)
            lines.append(f"factor {f.kind.value} owner={f.owner} gap={f.gap} vars: {names}")
        return "\n".join(lines) + "\n"

    # -- evaluation --------------------------------------------------------

    def factor_logpot(self, factor: Factor, values: tuple[int, ...],
                      params: ParameterSet) -> float:
        """Evaluate one factor's log-potential at the given variable values."""
        k = factor.kind
        if k == FactorKind.IMAGE_OWNER:
            return image_owner_logpot(values[0], values[1],
                                      params.scalar("owner_coupling", factor.owner))
        if k == FactorKind.VISUAL:
            return visual_logpot(self.features[factor.image_row], values[0], params.visual)
        if k == FactorKind.TEMPORAL:
            return temporal_logpot(values[0], values[1],
                                   params.scalar("temporal_weight", factor.owner),
                                   params.scalar("temporal_decay", factor.owner),
                                   factor.gap)
        if k == FactorKind.SOCIAL:
            return social_logpot(values[0], values[1], values[2],
                                 params.scalar("social_weight", factor.owner))
        return stability_logpot(values[0], values[1],
                                params.scalar("stability_weight", factor.owner),
                                params.scalar("stability_decay", factor.owner),
                                factor.gap)

    def compile_tables(self, params: ParameterSet) -> list[np.ndarray]:
        """Log-potential tables over domain indices, one per factor, in order.

        Vectorized by kind; axis order matches each factor's ``vars`` tuple.
        """
        tables: list[Optional[np.ndarray]] = [None] * len(self.factors)
        by_kind: dict[FactorKind, list[int]] = {}
        for i, f in enumerate(self.factors):
            by_kind.setdefault(f.kind, []).append(i)

        for kind, idxs in by_kind.items():
            facs = [self.factors[i] for i in idxs]
            if kind == FactorKind.VISUAL:
                rows = np.array([f.image_row for f in facs])
                score = self.features[rows] @ params.visual
                stacked = np.stack([-score, score], axis=1)
            elif kind == FactorKind.IMAGE_OWNER:
                w = np.array([params.scalar("owner_coupling", f.owner) for f in facs])
                stacked = -w[:, None, None] * _PAT_SPIN_DIFF
            elif kind == FactorKind.TEMPORAL:
                w = np.array([params.scalar("temporal_weight", f.owner) for f in facs])
                d = np.array([params.scalar("temporal_decay", f.owner) for f in facs])
                g = np.array([f.gap for f in facs])
                coef = w * np.exp(-d * g)
                stacked = -coef[:, None, None] * _PAT_SPIN_DIFF
            elif kind == FactorKind.SOCIAL:
                w = np.array([params.scalar("social_weight", f.owner) for f in facs])
                stacked = -w[:, None, None, None] * _PAT_SOCIAL
            else:
                w = np.array([params.scalar("stability_weight", f.owner) for f in facs])
                d = np.array([params.scalar("stability_decay", f.owner) for f in facs])
                g = np.array([f.gap for f in facs])
                coef = w * np.exp(-d * g)
                stacked = -coef[:, None, None] * _PAT_BIN_DIFF
            for row, i in enumerate(idxs):
                tables[i] = stacked[row]
        return tables  # type: ignore[return-value]


Assignment = dict  # VariableId -> value in that variable's domain


def objective(graph: FactorGraph, assignment: Mapping[VariableId, int],
              params: ParameterSet) -> float:
    """Sum of all factor log-potentials at a complete assignment.

    The normalization constant is deliberately excluded: it does not depend
    on the assignment and is only ever materialized by the enumeration
    oracle. Clamped variables must appear at their clamped values.
    """
    total = 0.0
    for idx, domain_idx in graph.clamps.items():
        var = graph.variables[idx]
        expected = graph.domain_values(idx)[domain_idx]
        if var not in assignment:
            raise ValueError(f"assignment missing clamped variable {var}")
        if assignment[var] != expected:
            raise ValueError(f"clamped variable {var} must hold {expected}")
    for factor in graph.factors:
        try:
            values = tuple(assignment[graph.variables[i]] for i in factor.vars)
        except KeyError as exc:
            raise ValueError(f"assignment missing variable {exc.args[0]}") from exc
        total += graph.factor_logpot(factor, values, params)
    return float(total)


def build_graph(net: TimeVaryingNetwork, category: EmotionCategory,
                window: int = 1,
                drop: Iterable = ()) -> FactorGraph:
    """Construct the per-category factor graph for a network.

    Variables: one ImageVar per image (clamped where that category is
    labeled); one UserVar per (user, slice) where the user uploaded, plus
    slices that bridge two uploads within the temporal window; one
    InfluenceVar per directed edge occurrence where both endpoint UserVars
    exist. TEMPORAL and STABILITY factors link pairs of slices at gap 1..window.

    ``drop`` removes factor kinds (ablation); dropping SOCIAL also removes
    influence variables and their STABILITY factors, which would otherwise be
    disconnected from the data.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    category = as_category(category)
    dropped = {as_kind(k) for k in drop}
    if FactorKind.SOCIAL in dropped:
        dropped.add(FactorKind.STABILITY)

    variables: list[VariableId] = []
    clamps: dict[VariableId, int] = {}
    factors: list[Factor] = []
    features_rows: list[np.ndarray] = []

    # user variables: upload slices plus bridge slices within the window
    user_slices: dict[str, set[int]] = {u: set() for u in net.users}
    for rec in net.iter_images():
        user_slices[rec.owner].add(rec.t)
    for u in net.users:
        active = sorted(user_slices[u])
        bridges = set()
        for a, b in zip(active, active[1:]):
            for t in range(a + 1, b):
                if t - a <= window and b - t <= window:
                    bridges.add(t)
        user_slices[u].update(bridges)

    image_vars: list[ImageVar] = []
    for rec in net.iter_images():
        var = ImageVar(rec.image_id)
        image_vars.append(var)
        variables.append(var)
        label = rec.label_for(category)
        if label is not None:
            clamps[var] = label
    for u in net.users:
        for t in sorted(user_slices[u]):
            variables.append(UserVar(u, t))

    user_var_set = {v for v in variables if isinstance(v, UserVar)}
    influence_vars: list[InfluenceVar] = []
    if FactorKind.SOCIAL not in dropped:
        for t in range(net.horizon):
            for (u, v) in sorted(net.edges_at(t)):
                if UserVar(u, t) in user_var_set and UserVar(v, t) in user_var_set:
                    influence_vars.append(InfluenceVar(u, v, t))
                    influence_vars.append(InfluenceVar(v, u, t))
        variables.extend(influence_vars)

    graph_index = {v: i for i, v in enumerate(variables)}

    for rec in net.iter_images():
        img_idx = graph_index[ImageVar(rec.image_id)]
        usr_idx = graph_index[UserVar(rec.owner, rec.t)]
        if FactorKind.IMAGE_OWNER not in dropped:
            factors.append(Factor(FactorKind.IMAGE_OWNER, (img_idx, usr_idx), rec.owner))
        if FactorKind.VISUAL not in dropped:
            factors.append(Factor(FactorKind.VISUAL, (img_idx,), rec.owner,
                                  image_row=len(features_rows)))
            features_rows.append(rec.features)

    if FactorKind.TEMPORAL not in dropped:
        for u in net.users:
            slices = sorted(user_slices[u])
            for i, t_prev in enumerate(slices):
                for t_cur in slices[i + 1:]:
                    gap = t_cur - t_prev
                    if gap > window:
                        break
                    factors.append(Factor(
                        FactorKind.TEMPORAL,
                        (graph_index[UserVar(u, t_prev)], graph_index[UserVar(u, t_cur)]),
                        u, gap=gap))

    if FactorKind.SOCIAL not in dropped:
        for var in influence_vars:
            factors.append(Factor(
                FactorKind.SOCIAL,
                (graph_index[UserVar(var.src, var.t)],
                 graph_index[UserVar(var.dst, var.t)],
                 graph_index[var]),
                var.src))
        if FactorKind.STABILITY not in dropped:
            by_pair: dict[tuple[str, str], list[int]] = {}
            for var in influence_vars:
                by_pair.setdefault((var.src, var.dst), []).append(var.t)
            for (src, dst) in sorted(by_pair):
                slices = sorted(by_pair[(src, dst)])
                for i, t_prev in enumerate(slices):
                    for t_cur in slices[i + 1:]:
                        gap = t_cur - t_prev
                        if gap > window:
                            break
                        factors.append(Factor(
                            FactorKind.STABILITY,
                            (graph_index[InfluenceVar(src, dst, t_prev)],
                             graph_index[InfluenceVar(src, dst, t_cur)]),
                            src, gap=gap))

    features = (np.array(features_rows) if features_rows
                else np.zeros((0, FEATURE_DIM)))
    return FactorGraph(variables, factors, clamps=clamps, features=features)
