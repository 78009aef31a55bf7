"""Figure rendering for the CLI report path.

Every plot lands next to the delimited output it was derived from; the Agg
backend keeps this headless-safe.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_STYLE = {"h": dict(color="tab:blue", marker="s"), "uh": dict(color="tab:orange", marker="o")}


def _by_format(rows):
    grouped: dict[str, list[dict]] = {}
    for row in rows:
        grouped.setdefault(row["format"], []).append(row)
    return grouped


def save_sweep_figure(rows, axis: str, path) -> None:
    """Memory usage (admissible / dense / total elements) against the swept axis."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for fmt, group in sorted(_by_format(rows).items()):
        group = sorted(group, key=lambda r: r[axis])
        xs = [r[axis] for r in group]
        style = _STYLE.get(fmt, {})
        ax.plot(xs, [r["adm_elements"] for r in group], label=f"{fmt} adm", **style)
        ax.plot(
            xs,
            [r["total_elements"] for r in group],
            linestyle="--",
            label=f"{fmt} total",
            **style,
        )
    ax.set_xscale("log")
    ax.set_yscale("log")
    if axis == "eps":
        ax.invert_xaxis()
    ax.set_xlabel(axis)
    ax.set_ylabel("stored elements")
    ax.grid(True, which="both", linestyle=":", alpha=0.5)
    ax.legend(fontsize=8)
    fig.savefig(path, bbox_inches="tight", dpi=120)
    plt.close(fig)


def save_verify_figure(rows, path) -> None:
    """Total memory against the estimated relative spectral error, per format."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for fmt, group in sorted(_by_format(rows).items()):
        pts = [(r["rel_spec_err"], r["total_elements"]) for r in group if r["rel_spec_err"]]
        if not pts:
            continue
        pts.sort()
        style = _STYLE.get(fmt, {})
        ax.plot([p[0] for p in pts], [p[1] for p in pts], label=fmt, **style)
    ax.set_xscale("log")
    ax.set_xlabel("relative spectral error")
    ax.set_ylabel("stored elements")
    ax.grid(True, which="both", linestyle=":", alpha=0.5)
    ax.legend(fontsize=8)
    fig.savefig(path, bbox_inches="tight", dpi=120)
    plt.close(fig)
