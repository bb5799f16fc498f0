"""Figure rendering for the CLI report path.

Every analysis command writes delimited data first; these helpers render the
same data to PNG files next to it. The core analysis functions never import
this module.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update({
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.8,
    "lines.markersize": 5,
    "font.size": 10,
})


def _finish(fig, ax, path, title, xlabel, ylabel):
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_sampling(report, path) -> None:
    """Group emotion ratios against the look-back interval."""
    fig, ax = plt.subplots()
    deltas = list(report.deltas)
    series = [
        ("no emotional friends", report.friend_independent, "o"),
        ("1-2 emotional friends", report.friends_1_2, "s"),
        ("3+ emotional friends", report.friends_3_plus, "^"),
    ]
    for label, cells, marker in series:
        ax.plot(deltas, [cells[d].ratio for d in deltas], marker=marker, label=label)
    ax.set_xticks(deltas)
    _finish(fig, ax, path, f"{report.category.value} ratio by friend group",
            "look-back interval (slices)", "emotion ratio")


def plot_temporal(rates: dict, path, category) -> None:
    fig, ax = plt.subplots()
    deltas = sorted(rates)
    ax.plot(deltas, [rates[d] for d in deltas], marker="o", label="same-emotion rate")
    ax.set_xticks(deltas)
    _finish(fig, ax, path, f"{category} self-agreement over time",
            "slice gap", "agreement rate")


def plot_social(friend_rates: dict, random_rates: dict, path, category) -> None:
    fig, ax = plt.subplots()
    deltas = sorted(friend_rates)
    ax.plot(deltas, [friend_rates[d] for d in deltas], marker="o", label="friends")
    ax.plot(deltas, [random_rates.get(d) for d in deltas], marker="s",
            linestyle="--", label="random non-friends")
    ax.set_xticks(deltas)
    _finish(fig, ax, path, f"{category} agreement with peer groups",
            "slice gap", "agreement rate")


def plot_trace(trace: list, path, category) -> None:
    fig, ax = plt.subplots()
    its = [row["iteration"] for row in trace]
    ax.plot(its, [row["objective"] for row in trace], marker="o", label="objective")
    ax.set_xticks(its)
    _finish(fig, ax, path, f"training trace ({category})",
            "outer iteration", "log-likelihood estimate")


def plot_cca(correlations, path) -> None:
    fig, ax = plt.subplots()
    ax.bar(range(1, len(correlations) + 1), correlations, label="canonical correlation")
    ax.set_xticks(range(1, len(correlations) + 1))
    ax.set_ylim(0, 1)
    _finish(fig, ax, path, "canonical correlations", "component", "correlation")


def plot_metrics(variants: dict, path, metric: str = "accuracy") -> None:
    """Grouped bars: one group per category plus the average, one bar per variant."""
    fig, ax = plt.subplots()
    names = list(variants)
    cats = sorted({c.value for rep in variants.values() for c in rep.per_category})
    cats.append("average")
    width = 0.8 / max(1, len(names))
    for i, name in enumerate(names):
        rep = variants[name]
        values = []
        for cat in cats:
            if cat == "average":
                values.append(getattr(rep.average, metric))
            else:
                member = [m for c, m in rep.per_category.items() if c.value == cat]
                values.append(getattr(member[0], metric) if member else 0.0)
        ax.bar([x + i * width for x in range(len(cats))], values, width=width, label=name)
    ax.set_xticks([x + 0.4 - width / 2 for x in range(len(cats))])
    ax.set_xticklabels(cats, rotation=30, ha="right")
    _finish(fig, ax, path, f"{metric} by category", "", metric)
