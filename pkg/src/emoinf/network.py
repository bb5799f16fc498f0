"""Time-varying image social network: data model, file format, label semantics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Mapping, NamedTuple, Optional

import numpy as np

FEATURE_DIM = 21
SCHEMA_VERSION = 1
WEEK_SECONDS = 7 * 24 * 3600


class EmotionCategory(str, Enum):
    """The six basic emotion categories used throughout the package."""

    HAPPINESS = "happiness"
    SURPRISE = "surprise"
    ANGER = "anger"
    DISGUST = "disgust"
    FEAR = "fear"
    SADNESS = "sadness"

    def __str__(self) -> str:  # keep file formats and CLI output readable
        return self.value


CATEGORIES = tuple(EmotionCategory)


def as_category(value) -> EmotionCategory:
    """Coerce a string or EmotionCategory to EmotionCategory."""
    if isinstance(value, EmotionCategory):
        return value
    try:
        return EmotionCategory(str(value).lower())
    except ValueError:
        names = ", ".join(c.value for c in CATEGORIES)
        raise ValueError(f"unknown emotion category {value!r} (expected one of: {names})")


def check_binary_label(value) -> int:
    """Validate a binary emotion label; only -1 and +1 are representable."""
    if value in (-1, 1):
        return int(value)
    raise ValueError(f"binary label must be -1 or +1, got {value!r}")


class NetworkFormatError(ValueError):
    """Raised on malformed network files; carries the offending line number."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class ImageRecord:
    """A single uploaded image: owner, time slice, visual features, optional labels.

    ``features`` is the 21-dimensional visual descriptor; ``labels`` maps an
    emotion category to -1/+1 where ground truth is known.
    """

    image_id: str
    owner: str
    t: int
    features: np.ndarray
    labels: Optional[dict[EmotionCategory, int]] = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.shape != (FEATURE_DIM,):
            raise ValueError(
                f"image {self.image_id!r}: features must have {FEATURE_DIM} entries, "
                f"got shape {feats.shape}"
            )
        if not np.all(np.isfinite(feats)):
            raise ValueError(f"image {self.image_id!r}: features contain non-finite values")
        object.__setattr__(self, "features", feats)
        if self.t < 0:
            raise ValueError(f"image {self.image_id!r}: negative time slice {self.t}")
        if self.labels is not None:
            clean = {}
            for cat, lab in self.labels.items():
                clean[as_category(cat)] = check_binary_label(lab)
            object.__setattr__(self, "labels", clean)

    def label_for(self, category: EmotionCategory) -> Optional[int]:
        if self.labels is None:
            return None
        return self.labels.get(category)


class UserSliceLabel(NamedTuple):
    """Derived per-(user, slice) emotion label and its provenance."""

    user: str
    t: int
    category: EmotionCategory
    label: int
    source: str  # "observed-majority" or "inferred"


class TimeVaryingNetwork:
    """Users, per-slice friendship edges, and per-(user, slice) image sets.

    Immutable after construction; safe for concurrent read access.

    Parameters
    ----------
    users : iterable of str
        User identifiers.
    horizon : int
        Number of time slices; every edge and image slice index must be < horizon.
    edges : iterable of (u, v, t)
        Undirected friendship edges per slice. No self-edges; endpoints must
        be known users.
    images : iterable of ImageRecord
    """

    def __init__(self, users: Iterable[str], horizon: int,
                 edges: Iterable[tuple[str, str, int]],
                 images: Iterable[ImageRecord]):
        self.users: tuple[str, ...] = tuple(sorted(set(str(u) for u in users)))
        self._user_set = set(self.users)
        if horizon < 0:
            raise ValueError(f"horizon must be non-negative, got {horizon}")
        self.horizon = int(horizon)

        per_slice: list[set[tuple[str, str]]] = [set() for _ in range(self.horizon)]
        for u, v, t in edges:
            u, v = str(u), str(v)
            if u == v:
                raise ValueError(f"self-edge on user {u!r} at slice {t}")
            for end in (u, v):
                if end not in self._user_set:
                    raise ValueError(f"edge ({u!r}, {v!r}, t={t}) references unknown user {end!r}")
            if not (0 <= t < self.horizon):
                raise ValueError(f"edge ({u!r}, {v!r}) has slice {t} outside horizon {self.horizon}")
            per_slice[t].add((min(u, v), max(u, v)))
        self._edges: tuple[frozenset, ...] = tuple(frozenset(s) for s in per_slice)

        by_key: dict[tuple[str, int], list[ImageRecord]] = {}
        seen_ids: set[str] = set()
        for rec in images:
            if rec.owner not in self._user_set:
                raise ValueError(f"image {rec.image_id!r} references unknown user {rec.owner!r}")
            if rec.t >= self.horizon:
                raise ValueError(
                    f"image {rec.image_id!r} has slice {rec.t} outside horizon {self.horizon}"
                )
            if rec.image_id in seen_ids:
                raise ValueError(f"duplicate image id {rec.image_id!r}")
            seen_ids.add(rec.image_id)
            by_key.setdefault((rec.owner, rec.t), []).append(rec)
        self._images = {
            key: tuple(sorted(recs, key=lambda r: r.image_id))
            for key, recs in by_key.items()
        }

    # -- structure queries ------------------------------------------------

    def neighbors_at(self, user: str, t: int) -> set[str]:
        """Friends of ``user`` at slice ``t`` (symmetric by construction)."""
        if user not in self._user_set:
            raise KeyError(f"unknown user {user!r}")
        if not (0 <= t < self.horizon):
            raise IndexError(f"slice {t} outside horizon {self.horizon}")
        out = set()
        for a, b in self._edges[t]:
            if a == user:
                out.add(b)
            elif b == user:
                out.add(a)
        return out

    def edges_at(self, t: int) -> frozenset:
        """Undirected edge set at slice ``t`` as (u, v) pairs with u < v."""
        if not (0 <= t < self.horizon):
            raise IndexError(f"slice {t} outside horizon {self.horizon}")
        return self._edges[t]

    def has_edge(self, u: str, v: str, t: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges_at(t)

    def images_at(self, user: str, t: int) -> tuple[ImageRecord, ...]:
        return self._images.get((user, t), ())

    def iter_images(self) -> Iterator[ImageRecord]:
        """All images, ordered by (owner, slice, image id)."""
        for key in sorted(self._images):
            yield from self._images[key]

    def active_slices(self, user: str) -> tuple[int, ...]:
        """Slices where ``user`` uploaded at least one image, ascending."""
        return tuple(sorted(t for (u, t) in self._images if u == user))

    @property
    def n_images(self) -> int:
        return sum(len(v) for v in self._images.values())

    def labeled_images(self, category: EmotionCategory) -> list[ImageRecord]:
        category = as_category(category)
        return [rec for rec in self.iter_images() if rec.label_for(category) is not None]


# -- derived labels and multi-label resolution ----------------------------


def derive_user_labels(net: TimeVaryingNetwork,
                       category: EmotionCategory) -> list[UserSliceLabel]:
    """Majority-vote user emotion per (user, slice) from labeled images.

    Emits +1 when strictly more than half of that slice's labeled images are
    +1, otherwise -1 (an exact tie counts as -1). (user, slice) pairs with no
    labeled image are omitted. Output order is (user, slice) sorted and does
    not depend on image ordering.
    """
    category = as_category(category)
    out: list[UserSliceLabel] = []
    for (user, t) in sorted(net._images):
        labels = [rec.label_for(category) for rec in net.images_at(user, t)]
        labels = [l for l in labels if l is not None]
        if not labels:
            continue
        positive = sum(1 for l in labels if l == 1)
        value = 1 if 2 * positive > len(labels) else -1
        out.append(UserSliceLabel(user, t, category, value, "observed-majority"))
    return out


def user_label_map(net: TimeVaryingNetwork,
                   category: EmotionCategory) -> dict[tuple[str, int], int]:
    """derive_user_labels as a {(user, slice): label} lookup."""
    return {(l.user, l.t): l.label for l in derive_user_labels(net, category)}


def resolve_multilabel(probabilities: Mapping) -> Optional[EmotionCategory]:
    """Pick the final emotion from per-category positive probabilities.

    Every probability comes from an independent binary model. If none reaches
    0.5 the subject is neutral (returns None); otherwise the category with the
    highest probability among those >= 0.5 wins. Ties break by category
    declaration order, so the result is independent of mapping order.
    """
    best: Optional[EmotionCategory] = None
    best_p = -1.0
    by_cat = {as_category(c): float(p) for c, p in probabilities.items()}
    for cat in CATEGORIES:  # fixed order makes tie-breaking deterministic
        p = by_cat.get(cat)
        if p is None:
            continue
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"probability for {cat} outside [0,1]: {p}")
        if p >= 0.5 and p > best_p:
            best, best_p = cat, p
    return best


def slice_index(epoch_seconds: float, origin_epoch: float = 0.0,
                slice_seconds: float = WEEK_SECONDS) -> int:
    """Map an epoch timestamp to a slice index (default width one week)."""
    if slice_seconds <= 0:
        raise ValueError("slice width must be positive")
    return int(math.floor((epoch_seconds - origin_epoch) / slice_seconds))


# -- line-delimited file format --------------------------------------------
#
# One JSON object per line, UTF-8, LF endings. The first line is a header:
#   {"kind": "header", "version": 1, "horizon": T}
# followed by records in any order:
#   {"kind": "user", "id": "u1"}
#   {"kind": "edge", "u": "u1", "v": "u2", "t": 0}
#   {"kind": "image", "id": "i1", "owner": "u1", "t": 0,
#    "features": [... 21 floats ...], "labels": {"happiness": 1}}
# Writing is canonical (sorted records, compact separators), so
# write -> read -> write is byte-identical.


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def load_network(path) -> TimeVaryingNetwork:
    """Load and validate a network from the line-delimited JSON format.

    Raises NetworkFormatError with the offending line number on parse
    failures, and ValueError naming the offending record on invariant
    violations.
    """
    users: list[str] = []
    edges: list[tuple[str, str, int]] = []
    images: list[ImageRecord] = []
    horizon = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise NetworkFormatError(f"invalid JSON ({exc.msg})", lineno) from exc
            if not isinstance(rec, dict) or "kind" not in rec:
                raise NetworkFormatError("record is not an object with a 'kind' field", lineno)
            kind = rec["kind"]
            try:
                if kind == "header":
                    if horizon is not None:
                        raise NetworkFormatError("duplicate header", lineno)
                    if rec.get("version") != SCHEMA_VERSION:
                        raise NetworkFormatError(
                            f"unsupported schema version {rec.get('version')!r}", lineno)
                    horizon = int(rec["horizon"])
                elif kind == "user":
                    users.append(str(rec["id"]))
                elif kind == "edge":
                    edges.append((str(rec["u"]), str(rec["v"]), int(rec["t"])))
                elif kind == "image":
                    labels = rec.get("labels")
                    images.append(ImageRecord(
                        image_id=str(rec["id"]),
                        owner=str(rec["owner"]),
                        t=int(rec["t"]),
                        features=rec["features"],
                        labels=labels,
                    ))
                else:
                    raise NetworkFormatError(f"unknown record kind {kind!r}", lineno)
            except NetworkFormatError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise NetworkFormatError(str(exc), lineno) from exc
    if horizon is None:
        if not users and not edges and not images:
            return TimeVaryingNetwork((), 0, (), ())
        raise NetworkFormatError("missing header line")
    return TimeVaryingNetwork(users, horizon, edges, images)


def save_network(net: TimeVaryingNetwork, path) -> None:
    """Write a network in canonical form (stable ordering, compact JSON)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump({"kind": "header", "version": SCHEMA_VERSION,
                        "horizon": net.horizon}) + "\n")
        for u in net.users:
            fh.write(_dump({"kind": "user", "id": u}) + "\n")
        for t in range(net.horizon):
            for (u, v) in sorted(net.edges_at(t)):
                fh.write(_dump({"kind": "edge", "u": u, "v": v, "t": t}) + "\n")
        for rec in net.iter_images():
            obj = {
                "kind": "image",
                "id": rec.image_id,
                "owner": rec.owner,
                "t": rec.t,
                "features": [float(x) for x in rec.features],
            }
            if rec.labels:
                obj["labels"] = {c.value: int(l) for c, l in sorted(rec.labels.items())}
            fh.write(_dump(obj) + "\n")


def mask_image_labels(net: TimeVaryingNetwork, image_ids: Iterable[str],
                      category: Optional[EmotionCategory] = None) -> TimeVaryingNetwork:
    """Copy of ``net`` with the given images' labels hidden.

    With ``category`` set, only that category's label is removed; otherwise
    all labels on the listed images are dropped. Used to hold labels out for
    honest evaluation.
    """
    hide = set(image_ids)
    category = as_category(category) if category is not None else None
    images = []
    for rec in net.iter_images():
        labels = rec.labels
        if rec.image_id in hide and labels:
            if category is None:
                labels = None
            else:
                labels = {c: l for c, l in labels.items() if c != category} or None
        images.append(ImageRecord(rec.image_id, rec.owner, rec.t, rec.features, labels))
    edges = [(u, v, t) for t in range(net.horizon) for (u, v) in sorted(net.edges_at(t))]
    return TimeVaryingNetwork(net.users, net.horizon, edges, images)
