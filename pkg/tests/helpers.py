"""Shared test fixtures: random graph generators and small utilities."""

from __future__ import annotations

import numpy as np

from emoinf.factorgraph import (
    Factor,
    FactorGraph,
    FactorKind,
    ImageVar,
    InfluenceVar,
    ParameterSet,
    UserVar,
)
from emoinf.network import FEATURE_DIM


def random_params(users, rng, low=0.0, high=1.0) -> ParameterSet:
    def table():
        return {u: float(rng.uniform(low, high)) for u in users}
    return ParameterSet(
        visual=rng.uniform(-1, 1, size=FEATURE_DIM) * 0.5,
        owner_coupling=table(), temporal_weight=table(), temporal_decay=table(),
        social_weight=table(), stability_weight=table(), stability_decay=table(),
    )


def random_tree_graph(rng, n_vars=(3, 8), clamp_prob=0.2):
    """Grow a random tree-structured factor graph with mixed factor kinds.

    Every growth step attaches a factor whose new variables keep the
    bipartite graph acyclic. Image variables may arrive clamped. Returns
    (graph, params).
    """
    target = int(rng.integers(n_vars[0], n_vars[1] + 1))
    variables = []
    factors = []
    features = []
    clamps = {}
    users = [f"p{i}" for i in range(6)]
    user_slices = set()
    mu_slices = set()
    img_count = 0

    def add_user(user, t):
        user_slices.add((user, t))
        variables.append(UserVar(user, t))
        return len(variables) - 1

    root_user = users[0]
    root_idx = add_user(root_user, 0)
    attach_points = [("user", root_idx, root_user, 0)]

    while len(variables) < target:
        kind, idx, owner, t = attach_points[int(rng.integers(0, len(attach_points)))]
        if kind == "user":
            choice = rng.integers(0, 3)
            if choice == 0:  # hang an image (with its feature evidence) off this user
                iv = ImageVar(f"img{img_count}")
                img_count += 1
                variables.append(iv)
                img_idx = len(variables) - 1
                factors.append(Factor(FactorKind.IMAGE_OWNER, (img_idx, idx), owner))
                factors.append(Factor(FactorKind.VISUAL, (img_idx,), owner,
                                      image_row=len(features)))
                features.append(rng.normal(size=FEATURE_DIM) * 0.5)
                if rng.random() < clamp_prob:
                    clamps[iv] = int(rng.choice((-1, 1)))
            elif choice == 1:  # extend this user's timeline
                gap = int(rng.integers(1, 4))
                t2 = t + gap
                if (owner, t2) in user_slices:
                    continue
                new_idx = add_user(owner, t2)
                factors.append(Factor(FactorKind.TEMPORAL, (idx, new_idx), owner,
                                      gap=gap))
                attach_points.append(("user", new_idx, owner, t2))
            else:  # couple to a brand-new neighbor through an influence variable
                other = users[int(rng.integers(0, len(users)))]
                if (other, t) in user_slices or (owner, other, t) in mu_slices \
                        or other == owner:
                    continue
                other_idx = add_user(other, t)
                mu = InfluenceVar(owner, other, t)
                mu_slices.add((owner, other, t))
                variables.append(mu)
                mu_idx = len(variables) - 1
                factors.append(Factor(FactorKind.SOCIAL, (idx, other_idx, mu_idx),
                                      owner))
                attach_points.append(("user", other_idx, other, t))
                attach_points.append(("mu", mu_idx, owner, t))
        else:  # extend an influence chain
            mu_var = variables[idx]
            gap = int(rng.integers(1, 4))
            t2 = mu_var.t + gap
            if (mu_var.src, mu_var.dst, t2) in mu_slices:
                continue
            mu2 = InfluenceVar(mu_var.src, mu_var.dst, t2)
            mu_slices.add((mu_var.src, mu_var.dst, t2))
            variables.append(mu2)
            mu2_idx = len(variables) - 1
            factors.append(Factor(FactorKind.STABILITY, (idx, mu2_idx),
                                  mu_var.src, gap=gap))
            attach_points.append(("mu", mu2_idx, owner, t2))

    graph = FactorGraph(variables, factors, clamps=clamps,
                        features=np.array(features) if features
                        else np.zeros((0, FEATURE_DIM)))
    return graph, random_params(users, rng)


def random_loopy_graph(rng, n_vars=(6, 12)):
    """Tree graph plus extra factors between existing variables (cycles)."""
    graph, params = random_tree_graph(rng, n_vars=n_vars, clamp_prob=0.1)
    variables = list(graph.variables)
    factors = list(graph.factors)
    features = graph.features

    by_user: dict[str, list[int]] = {}
    mus: list[int] = []
    for i, v in enumerate(variables):
        if isinstance(v, UserVar):
            by_user.setdefault(v.user, []).append(i)
        elif isinstance(v, InfluenceVar):
            mus.append(i)

    extra = 1 + int(rng.integers(0, 3))
    for _ in range(extra):
        kind = rng.integers(0, 2)
        if kind == 0:
            candidates = [idxs for idxs in by_user.values() if len(idxs) >= 2]
            if not candidates:
                continue
            idxs = candidates[int(rng.integers(0, len(candidates)))]
            a, b = sorted(rng.choice(idxs, size=2, replace=False))
            va, vb = variables[a], variables[b]
            if va.t == vb.t:
                continue
            factors.append(Factor(FactorKind.TEMPORAL, (a, b), va.user,
                                  gap=abs(vb.t - va.t)))
        else:
            if not mus:
                continue
            m = mus[int(rng.integers(0, len(mus)))]
            mv = variables[m]
            src_idx = [i for i in by_user.get(mv.src, []) if variables[i].t == mv.t]
            dst_idx = [i for i in by_user.get(mv.dst, []) if variables[i].t == mv.t]
            if not src_idx or not dst_idx:
                continue
            # a second social factor over the same triple closes a cycle
            factors.append(Factor(FactorKind.SOCIAL, (src_idx[0], dst_idx[0], m),
                                  mv.dst))
    clamps = {variables[i]: graph.domain_values(i)[d]
              for i, d in graph.clamps.items()}
    loopy = FactorGraph(variables, factors, clamps=clamps, features=features)
    return loopy, params


def random_assignment(graph, rng):
    """Uniform random assignment respecting clamps."""
    out = {}
    for i, var in enumerate(graph.variables):
        domain = graph.domain_values(i)
        if i in graph.clamps:
            out[var] = domain[graph.clamps[i]]
        else:
            out[var] = domain[int(rng.integers(0, 2))]
    return out
