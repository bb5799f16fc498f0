"""DOT (graph description language) export of a user's ego influence network.

Nodes are the user and their friends, annotated per slice with the image
count and resolved emotion; directed edges carry influence weights at or
above a threshold, drawn thicker the stronger the influence.
"""

from __future__ import annotations

from typing import Mapping, Optional, Sequence

from .network import TimeVaryingNetwork


def _escape(s: str) -> str:
    return str(s).replace("\\", "\\\\").replace('"', '\\"')


def _quote(s: str) -> str:
    return '"' + _escape(s) + '"'


def _label(lines_of_text) -> str:
    # \n inside a quoted DOT string is a line break in the rendered label
    return '"' + "\\n".join(_escape(part) for part in lines_of_text) + '"'


def export_ego_dot(net: TimeVaryingNetwork,
                   user: str,
                   influence: Mapping[tuple, float],
                   user_emotions: Mapping[tuple, str],
                   min_weight: float = 0.5,
                   slices: Optional[Sequence[int]] = None) -> str:
    """Render one user's ego network as a DOT digraph.

    ``influence`` maps (src, dst, t) to a weight in [0, 1];
    ``user_emotions`` maps (user, t) to a resolved emotion name (or
    "neutral"). ``slices`` selects which slices to annotate and which
    influence slices to draw; default is the last five.
    """
    if user not in net.users:
        raise KeyError(f"unknown user {user!r}")
    if slices is None:
        slices = range(max(0, net.horizon - 5), net.horizon)
    slices = sorted(set(int(t) for t in slices))
    for t in slices:
        if not (0 <= t < net.horizon):
            raise ValueError(f"slice {t} outside horizon {net.horizon}")

    members = {user}
    for t in slices:
        members |= net.neighbors_at(user, t)
    members = sorted(members)

    lines = ["digraph ego {", "  rankdir=LR;", "  node [shape=box, fontsize=10];"]
    for m in members:
        parts = [m]
        for t in slices:
            count = len(net.images_at(m, t))
            emo = user_emotions.get((m, t), "-")
            parts.append(f"t{t}: {count} img, {emo}")
        shape = ' style=bold' if m == user else ""
        lines.append(f"  {_quote(m)} [label={_label(parts)}{shape}];")

    member_set = set(members)
    drawn = []
    for (src, dst, t), weight in influence.items():
        if t not in slices or weight < min_weight:
            continue
        if src not in member_set or dst not in member_set:
            continue
        if user not in (src, dst):
            continue
        drawn.append((src, dst, t, float(weight)))
    # one edge per ordered pair, annotated with its strongest slice
    best: dict[tuple, tuple] = {}
    for src, dst, t, weight in drawn:
        key = (src, dst)
        if key not in best or weight > best[key][1]:
            best[key] = (t, weight)
    for (src, dst) in sorted(best):
        t, weight = best[(src, dst)]
        pen = 0.5 + 4.0 * weight
        lines.append(
            f"  {_quote(src)} -> {_quote(dst)} "
            f"[penwidth={pen:.2f}, label={_quote(f'{weight:.2f}@t{t}')}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
