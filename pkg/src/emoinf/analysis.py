"""Observation statistics, CCA, evaluation metrics, and the ablation harness.

All procedures are deterministic given their seed and emit plain data
structures; report files (CSV/JSON) and figures are written by the CLI
layer, not here.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .factorgraph import ImageVar
from .learning import (
    TrainConfig,
    baseline_predict,
    fit,
    train_linear_baseline,
)
from .network import (
    EmotionCategory,
    TimeVaryingNetwork,
    as_category,
    mask_image_labels,
    user_label_map,
)


# -- matched-group sampling test -------------------------------------------------


@dataclass
class SamplingCell:
    """One (delta, group) cell of the sampling test, averaged over repetitions."""

    ratio: float
    group_sizes: list[int] = field(default_factory=list)
    empty_repetitions: int = 0


@dataclass
class SamplingTestReport:
    category: EmotionCategory
    deltas: tuple[int, ...]
    repetitions: int
    group_size: int
    friend_independent: dict[int, SamplingCell] = field(default_factory=dict)
    friends_1_2: dict[int, SamplingCell] = field(default_factory=dict)
    friends_3_plus: dict[int, SamplingCell] = field(default_factory=dict)

    def to_rows(self) -> list[dict]:
        rows = []
        for d in self.deltas:
            rows.append({
                "delta": d,
                "friend_independent": self.friend_independent[d].ratio,
                "friends_1_2": self.friends_1_2[d].ratio,
                "friends_3_plus": self.friends_3_plus[d].ratio,
            })
        return rows


def sampling_test(net: TimeVaryingNetwork, category: EmotionCategory,
                  group_size: int = 50, repetitions: int = 10,
                  deltas: Sequence[int] = (1, 2, 3, 4), seed: int = 0,
                  t_mode: str = "distinct") -> SamplingTestReport:
    """Matched-group comparison of emotion ratios.

    For each repetition a reference slice t is drawn (distinct across
    repetitions by default; ``t_mode="window-disjoint"`` additionally spaces
    the draws at least max(deltas) apart). Users who uploaded at t are split,
    per delta, into the friend-independent group (no friend with the emotion
    at t-delta) and the friend-related group (at least one), the latter
    subdivided by how many friends had the emotion (1-2 vs 3+). Up to
    ``group_size`` users are sampled from each of the two pools and the
    fraction showing the emotion at t is averaged over repetitions.
    """
    category = as_category(category)
    deltas = tuple(sorted(deltas))
    if not deltas or deltas[0] < 1:
        raise ValueError("deltas must be positive")
    labels = user_label_map(net, category)
    rng = np.random.default_rng(seed)
    max_delta = deltas[-1]
    candidates_t = list(range(max_delta, net.horizon))
    if not candidates_t:
        raise ValueError(f"horizon {net.horizon} too short for delta {max_delta}")

    if t_mode == "distinct":
        k = min(repetitions, len(candidates_t))
        ts = list(rng.choice(candidates_t, size=k, replace=False))
    elif t_mode == "window-disjoint":
        ts, pool = [], list(candidates_t)
        while pool and len(ts) < repetitions:
            pick = int(rng.choice(pool))
            ts.append(pick)
            pool = [t for t in pool if abs(t - pick) > max_delta]
    else:
        raise ValueError(f"unknown t_mode {t_mode!r}")
    if len(ts) < repetitions:
        warnings.warn(f"only {len(ts)} usable reference slices for "
                      f"{repetitions} repetitions")

    report = SamplingTestReport(category=category, deltas=deltas,
                                repetitions=len(ts), group_size=group_size)
    sums = {name: {d: [] for d in deltas}
            for name in ("gi", "g12", "g3")}
    empties = {name: {d: 0 for d in deltas} for name in ("gi", "g12", "g3")}
    sizes = {name: {d: [] for d in deltas} for name in ("gi", "g12", "g3")}

    for t in ts:
        uploaders = sorted({u for u in net.users if net.images_at(u, t)})
        for d in deltas:
            related, independent = [], []
            counts = {}
            for u in uploaders:
                friends = net.neighbors_at(u, t - d)
                n_emotional = sum(1 for f in friends if labels.get((f, t - d)) == 1)
                counts[u] = n_emotional
                (related if n_emotional >= 1 else independent).append(u)

            if independent:
                take = min(group_size, len(independent))
                chosen = rng.choice(independent, size=take, replace=False)
                sums["gi"][d].append(float(np.mean(
                    [labels.get((u, t)) == 1 for u in chosen])))
                sizes["gi"][d].append(take)
            else:
                empties["gi"][d] += 1

            if related:
                take = min(group_size, len(related))
                chosen = rng.choice(related, size=take, replace=False)
                small = [u for u in chosen if counts[u] <= 2]
                big = [u for u in chosen if counts[u] >= 3]
                for name, sub in (("g12", small), ("g3", big)):
                    if not sub:
                        empties[name][d] += 1
                        continue
                    sums[name][d].append(float(np.mean(
                        [labels.get((u, t)) == 1 for u in sub])))
                    sizes[name][d].append(len(sub))
            else:
                empties["g12"][d] += 1
                empties["g3"][d] += 1

    for d in deltas:
        for name, target in (("gi", report.friend_independent),
                             ("g12", report.friends_1_2),
                             ("g3", report.friends_3_plus)):
            vals = sums[name][d]
            target[d] = SamplingCell(
                ratio=float(np.mean(vals)) if vals else float("nan"),
                group_sizes=sizes[name][d],
                empty_repetitions=empties[name][d],
            )
    return report


# -- temporal and social agreement rates ------------------------------------------


def temporal_correlation(net: TimeVaryingNetwork, category: EmotionCategory,
                         user_sample_n: int = 0, max_delta: int = 4,
                         seed: int = 0) -> tuple[dict[int, float], int]:
    """Average per-user rate of keeping the same derived label delta slices apart.

    For each sampled user and each delta, every slice pair (t, t+delta) where
    the user has a derived label at both counts; the user contributes the
    fraction of equal-label pairs. Users with no valid pair at a delta are
    excluded from that delta's average. ``user_sample_n=0`` uses all users.
    Returns ({delta: rate}, number of users excluded everywhere).
    """
    category = as_category(category)
    labels = user_label_map(net, category)
    by_user: dict[str, dict[int, int]] = {}
    for (u, t), lab in labels.items():
        by_user.setdefault(u, {})[t] = lab
    eligible = sorted(u for u, slots in by_user.items() if len(slots) >= 2)
    if user_sample_n and len(eligible) > user_sample_n:
        rng = np.random.default_rng(seed)
        eligible = sorted(rng.choice(eligible, size=user_sample_n, replace=False))

    rates: dict[int, float] = {}
    excluded_everywhere = set(u for u in by_user if u not in eligible)
    for d in range(1, max_delta + 1):
        per_user = []
        for u in eligible:
            slots = by_user[u]
            same = total = 0
            for t, lab in slots.items():
                if (t + d) in slots:
                    total += 1
                    same += int(slots[t + d] == lab)
            if total:
                per_user.append(same / total)
        rates[d] = float(np.mean(per_user)) if per_user else float("nan")
    return rates, len(excluded_everywhere)


def social_correlation(net: TimeVaryingNetwork, category: EmotionCategory,
                       user_sample_n: int = 0,
                       deltas: Sequence[int] = tuple(range(1, 13)),
                       mode: str = "friends", seed: int = 0
                       ) -> tuple[dict[int, float], int]:
    """Average rate at which a user's emotion shows up in a peer group later.

    Anchors are (user, t) pairs where the user's derived label is positive.
    For each delta, the user's contribution is the fraction of group members
    carrying the same positive label at t+delta, with members lacking a
    label counted as not-same. The group is the user's friends at t
    (``mode="friends"``) or a per-(user, t) random set of non-friends of the
    same size (``mode="random"``). Returns ({delta: rate}, skipped users).
    """
    category = as_category(category)
    if mode not in ("friends", "random"):
        raise ValueError(f"unknown mode {mode!r}")
    labels = user_label_map(net, category)
    rng = np.random.default_rng(seed)

    anchors: dict[str, list[int]] = {}
    for (u, t), lab in labels.items():
        if lab == 1:
            anchors.setdefault(u, []).append(t)
    users = sorted(anchors)
    if user_sample_n and len(users) > user_sample_n:
        users = sorted(rng.choice(users, size=user_sample_n, replace=False))

    skipped = 0
    rates: dict[int, float] = {}
    per_delta_members: dict[int, list[tuple[float, int]]] = {d: [] for d in deltas}
    all_users = set(net.users)
    for u in users:
        used = False
        for t in sorted(anchors[u]):
            friends = sorted(net.neighbors_at(u, t))
            if not friends:
                continue
            for d in deltas:
                if t + d >= net.horizon:
                    continue
                if mode == "friends":
                    group = friends
                else:
                    pool = sorted(all_users - set(friends) - {u})
                    size = min(len(friends), len(pool))
                    group = list(rng.choice(pool, size=size, replace=False))
                if not group:
                    continue
                same = sum(1 for g in group if labels.get((g, t + d)) == 1)
                per_delta_members[d].append((same / len(group), u))
                used = True
        if not used:
            skipped += 1

    for d in deltas:
        contribs = per_delta_members[d]
        if not contribs:
            rates[d] = float("nan")
            continue
        by_user: dict[str, list[float]] = {}
        for value, u in contribs:
            by_user.setdefault(u, []).append(value)
        rates[d] = float(np.mean([np.mean(v) for v in by_user.values()]))
    return rates, skipped


# -- canonical correlation ---------------------------------------------------------


@dataclass
class CcaResult:
    correlations: np.ndarray       # descending, in [0, 1]
    x_directions: np.ndarray       # (p, k)
    y_directions: np.ndarray       # (q, k)
    rank_deficient: bool


def cca(X: np.ndarray, Y: np.ndarray, ridge: float = 1e-6) -> CcaResult:
    """Canonical correlations between two variable sets.

    Columns are centered and standardized internally (canonical correlations
    are invariant to invertible per-column affine maps, and standardizing
    makes the ridge scale-free), each covariance block gets a trace-scaled
    ridge so near-constant columns cannot break the whitening, and the SVD
    of the whitened cross-covariance yields the correlations. Degenerate
    (constant) columns are reported via ``rank_deficient``; the ridge keeps
    the computation finite regardless.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ValueError("X and Y must be 2-D with matching row counts")
    n, p = X.shape
    q = Y.shape[1]
    if n <= p + q:
        raise ValueError(f"need more rows than total columns: n={n}, p+q={p + q}")

    rank_deficient = False

    def standardize(mat):
        nonlocal rank_deficient
        centered = mat - mat.mean(axis=0)
        std = centered.std(axis=0)
        degenerate = std < 1e-12
        if degenerate.any():
            rank_deficient = True
            std = np.where(degenerate, 1.0, std)
        return centered / std, std

    Xs, x_std = standardize(X)
    Ys, y_std = standardize(Y)
    cxx = Xs.T @ Xs / (n - 1)
    cyy = Ys.T @ Ys / (n - 1)
    cxy = Xs.T @ Ys / (n - 1)
    cxx += ridge * max(np.trace(cxx) / p, 1e-12) * np.eye(p)
    cyy += ridge * max(np.trace(cyy) / q, 1e-12) * np.eye(q)

    def inv_sqrt(mat):
        nonlocal rank_deficient
        evals, evecs = np.linalg.eigh(mat)
        if (evals < 1e-9 * evals.max()).any():
            rank_deficient = True
        evals = np.maximum(evals, 1e-12 * evals.max())
        return evecs @ np.diag(1.0 / np.sqrt(evals)) @ evecs.T

    ix = inv_sqrt(cxx)
    iy = inv_sqrt(cyy)
    u, s, vt = np.linalg.svd(ix @ cxy @ iy, full_matrices=False)
    corr = np.clip(s, 0.0, 1.0)
    # map directions back to the original column scales
    x_dirs = (ix @ u) / x_std[:, None]
    y_dirs = (iy @ vt.T) / y_std[:, None]
    return CcaResult(correlations=corr, x_directions=x_dirs,
                     y_directions=y_dirs, rank_deficient=rank_deficient)


# -- classification metrics ----------------------------------------------------------


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class MetricsReport:
    per_category: dict = field(default_factory=dict)

    @property
    def average(self) -> Metrics:
        cats = list(self.per_category.values())
        if not cats:
            raise ValueError("empty metrics report")
        return Metrics(
            accuracy=float(np.mean([m.accuracy for m in cats])),
            precision=float(np.mean([m.precision for m in cats])),
            recall=float(np.mean([m.recall for m in cats])),
            f1=float(np.mean([m.f1 for m in cats])),
        )

    def to_rows(self) -> list[dict]:
        rows = []
        for cat in sorted(self.per_category, key=lambda c: c.value):
            m = self.per_category[cat]
            rows.append({"category": cat.value, "accuracy": m.accuracy,
                         "precision": m.precision, "recall": m.recall, "f1": m.f1})
        avg = self.average
        rows.append({"category": "average", "accuracy": avg.accuracy,
                     "precision": avg.precision, "recall": avg.recall, "f1": avg.f1})
        return rows


def binary_metrics(predictions: Mapping[str, float], truth: Mapping[str, int],
                   threshold: float = 0.5) -> Metrics:
    """Confusion-matrix metrics for one category.

    A prediction above the threshold counts as positive (exactly at the
    threshold counts as negative, matching the tie-break toward the lower
    label). F1 is 0 when precision + recall is 0.
    """
    if not truth:
        raise ValueError("empty truth set")
    missing = set(truth) - set(predictions)
    if missing:
        raise ValueError(f"predictions missing for {len(missing)} ids "
                         f"(e.g. {sorted(missing)[:3]})")
    tp = tn = fp = fn = 0
    for key, label in truth.items():
        pred = 1 if predictions[key] > threshold else -1
        if pred == 1 and label == 1:
            tp += 1
        elif pred == 1:
            fp += 1
        elif label == -1:
            tn += 1
        else:
            fn += 1
    total = tp + tn + fp + fn
    precision = tp / (tp + fp) if (tp + fp) else 0.0
    recall = tp / (tp + fn) if (tp + fn) else 0.0
    f1 = (2 * precision * recall / (precision + recall)
          if (precision + recall) else 0.0)
    return Metrics(accuracy=(tp + tn) / total, precision=precision,
                   recall=recall, f1=f1, tp=tp, tn=tn, fp=fp, fn=fn)


def evaluate(predictions: Mapping, truth: Mapping,
             threshold: float = 0.5) -> MetricsReport:
    """Per-category metrics plus macro average.

    ``predictions`` and ``truth`` map category -> {image id -> probability /
    label}; single-category inputs may also be passed as flat id maps.
    """
    def is_flat(mapping):
        return mapping and not any(isinstance(k, EmotionCategory) or
                                   (isinstance(k, str) and k in
                                    EmotionCategory._value2member_map_)
                                   for k in mapping)

    if is_flat(truth):
        raise ValueError("truth must be keyed by category")
    report = MetricsReport()
    for cat_key, cat_truth in truth.items():
        cat = as_category(cat_key)
        cat_pred = predictions.get(cat_key, predictions.get(cat, None))
        if cat_pred is None:
            raise ValueError(f"predictions missing category {cat.value}")
        report.per_category[cat] = binary_metrics(cat_pred, cat_truth, threshold)
    if not report.per_category:
        raise ValueError("empty truth set")
    return report


# -- held-out evaluation and ablations ------------------------------------------------


def split_labeled_images(net: TimeVaryingNetwork, category: EmotionCategory,
                         test_fraction: float = 0.2, seed: int = 0,
                         unit: str = "image") -> tuple[list[str], list[str]]:
    """Deterministic train/test split over this category's labeled images.

    ``unit="image"`` splits uniformly over labeled images; ``unit="slice"``
    splits whole (user, slice) groups, so a held-out image never has labeled
    siblings in its own slice (no within-slice label leakage).
    """
    if not (0.0 <= test_fraction < 1.0):
        raise ValueError("test fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    labeled = net.labeled_images(category)
    if unit == "image":
        ids = sorted(rec.image_id for rec in labeled)
        rng.shuffle(ids)
        n_test = int(round(test_fraction * len(ids)))
        return sorted(ids[n_test:]), sorted(ids[:n_test])
    if unit != "slice":
        raise ValueError(f"unknown split unit {unit!r}")
    groups: dict[tuple[str, int], list[str]] = {}
    for rec in labeled:
        groups.setdefault((rec.owner, rec.t), []).append(rec.image_id)
    keys = sorted(groups)
    rng.shuffle(keys)
    n_test = int(round(test_fraction * len(keys)))
    test_keys = set(keys[:n_test])
    test = sorted(i for k in test_keys for i in groups[k])
    train = sorted(i for k in groups.keys() - test_keys for i in groups[k])
    return train, test


@dataclass
class HoldoutResult:
    metrics: MetricsReport
    baseline: MetricsReport
    test_ids: list[str]
    model_probs: dict
    truth: dict


def holdout_evaluate(net: TimeVaryingNetwork, category: EmotionCategory,
                     config: Optional[TrainConfig] = None, window: int = 1,
                     drop: Iterable = (), test_fraction: float = 0.2,
                     split_seed: int = 0, split_unit: str = "image") -> HoldoutResult:
    """Mask a held-out fraction of labeled images, fit, score both the model
    and the feature-only linear baseline on the hidden labels."""
    category = as_category(category)
    config = config or TrainConfig()
    train_ids, test_ids = split_labeled_images(net, category, test_fraction,
                                               split_seed, unit=split_unit)
    if not test_ids:
        raise ValueError("empty test split")
    truth = {}
    by_id = {rec.image_id: rec for rec in net.iter_images()}
    for iid in test_ids:
        truth[iid] = by_id[iid].label_for(category)
    masked = mask_image_labels(net, test_ids, category)

    result = fit(masked, category, config, window=window, drop=drop)
    model_probs = {iid: result.marginals.prob_high(ImageVar(iid))
                   for iid in test_ids}
    model_metrics = MetricsReport()
    model_metrics.per_category[category] = binary_metrics(model_probs, truth)

    examples = [(by_id[iid].features, by_id[iid].label_for(category))
                for iid in train_ids]
    w, b = train_linear_baseline(examples, epochs=config.baseline_epochs,
                                 step=config.baseline_step, l2=config.baseline_l2)
    base_probs = {iid: (1.0 if baseline_predict(w, b, by_id[iid].features) == 1
                        else 0.0) for iid in test_ids}
    base_metrics = MetricsReport()
    base_metrics.per_category[category] = binary_metrics(base_probs, truth)
    return HoldoutResult(metrics=model_metrics, baseline=base_metrics,
                         test_ids=test_ids, model_probs=model_probs, truth=truth)


def ablation_run(net: TimeVaryingNetwork, category: EmotionCategory,
                 config: Optional[TrainConfig] = None,
                 drop: Iterable = (), window: int = 1,
                 test_fraction: float = 0.2,
                 split_seed: int = 0, split_unit: str = "image") -> MetricsReport:
    """Refit without the dropped factor kinds and evaluate on the same split.

    Dropping the social factor also removes influence variables and their
    stability factors (they would be disconnected from all data).
    """
    return holdout_evaluate(net, category, config=config, window=window,
                            drop=drop, test_fraction=test_fraction,
                            split_seed=split_seed, split_unit=split_unit).metrics


# -- report files ------------------------------------------------------------------


def write_rows_csv(rows: list[dict], path) -> None:
    if not rows:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def write_variant_metrics_csv(variants: Mapping[str, MetricsReport], path) -> None:
    """Per-category rows with model variants as column groups (accuracy then
    F1), mirroring the usual comparison-table layout."""
    names = list(variants)
    cats = sorted({c for rep in variants.values() for c in rep.per_category},
                  key=lambda c: c.value)
    fields = (["category"] + [f"accuracy_{n}" for n in names]
              + [f"f1_{n}" for n in names])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for cat in cats:
            row = {"category": cat.value}
            for n in names:
                m = variants[n].per_category.get(cat)
                row[f"accuracy_{n}"] = m.accuracy if m else ""
                row[f"f1_{n}"] = m.f1 if m else ""
            writer.writerow(row)
        row = {"category": "average"}
        for n in names:
            avg = variants[n].average
            row[f"accuracy_{n}"] = avg.accuracy
            row[f"f1_{n}"] = avg.f1
        writer.writerow(row)


def report_json(obj, path) -> None:
    def default(item):
        if isinstance(item, np.ndarray):
            return item.tolist()
        if isinstance(item, (np.floating, np.integer)):
            return item.item()
        if isinstance(item, EmotionCategory):
            return item.value
        if hasattr(item, "__dict__"):
            return item.__dict__
        raise TypeError(f"cannot serialize {type(item)}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, default=default)
        fh.write("\n")
