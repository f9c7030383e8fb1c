"""CSV writers and matplotlib figures for scenario runs.

Numbers are written with 17 significant digits so that solutions reload
bit-for-bit.  SVG output fixes the hash salt and drops the date so identical
runs give identical files.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .continuation import Branch, FoldEstimate  # noqa: E402

logger = logging.getLogger(__name__)

BRANCH_COLUMNS = ("parameter_kind", "parameter_value", "arclength", "sup_norm", "max_u", "min_u",
                  "probe_value", "fold_flag", "residual")

plt.rcParams["svg.hashsalt"] = "qgrowth"
plt.rcParams["svg.fonttype"] = "none"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_rows(path: Path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def write_branch_csv(path: Path, branch: Branch) -> Path:
    rows = [(branch.parameter_kind, p.param, p.arclength, p.sup_norm, p.max_u, p.min_u,
             p.probe_value, p.fold_flag, p.residual) for p in branch.points]
    return write_rows(path, BRANCH_COLUMNS, rows)


def write_solutions_csv(path: Path, branch: Branch) -> Path:
    """One row per branch point: index, parameter and the full grid function."""
    n = branch.points[0].solution.size if branch.points else 0
    header = ["point", "parameter_kind", "parameter_value"] + [f"u{i}" for i in range(n)]
    rows = [[i, branch.parameter_kind, p.param, *p.solution] for i, p in enumerate(branch.points)]
    return write_rows(path, header, rows)


def read_solutions_csv(path: Path) -> list[tuple[float, np.ndarray]]:
    out = []
    with Path(path).open(encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            out.append((float(row[2]), np.array([float(v) for v in row[3:]])))
    return out


def write_profile_csv(path: Path, coords: np.ndarray, columns: dict[str, np.ndarray]) -> Path:
    axes = ["x", "y"][: coords.shape[1]]
    names = list(columns)
    rows = [[*coords[i], *(columns[k][i] for k in names)] for i in range(coords.shape[0])]
    return write_rows(path, axes + names, rows)


def write_json(path: Path, data) -> Path:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        raise TypeError(f"not serializable: {type(o).__name__}")

    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=default) + "\n",
                          encoding="utf-8")
    return Path(path)


def _save(fig, path: Path) -> Path:
    path = Path(path)
    kwargs = {"metadata": {"Date": None}} if path.suffix == ".svg" else {}
    fig.savefig(path, **kwargs)
    plt.close(fig)
    return path


def branch_figure(path: Path, branches: dict[str, Branch], fold: FoldEstimate | None = None,
                  extra_points: dict[str, tuple] | None = None, title: str = "") -> Path:
    """Bifurcation diagram: parameter horizontally, ``max u`` vertically."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, br in branches.items():
        ax.plot(br.params, [p.max_u for p in br.points], lw=1.5, label=label)
    for label, (xs, ys) in (extra_points or {}).items():
        ax.plot(xs, ys, "o", ms=4, label=label)
    if fold is not None and fold.present:
        ax.axvline(fold.value, color="0.5", ls="--", lw=1)
        ax.annotate(f"fold {fold.value:.5g}", (fold.value, ax.get_ylim()[1]), ha="right",
                    va="top", fontsize=8)
    kinds = {br.parameter_kind for br in branches.values()}
    ax.set_xlabel("lambda" if kinds == {"lambda"} else "/".join(sorted(kinds)))
    ax.set_ylabel("max u")
    ax.axhline(0, color="0.8", lw=0.8)
    if title:
        ax.set_title(title)
    if len(branches) + len(extra_points or {}) > 1:
        ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def profile_figure(path: Path, grid, profiles: dict[str, np.ndarray], title: str = "") -> Path:
    """Line plot in 1D; filled contour of the first profile in 2D."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if grid.dim == 1:
        x = grid.x
        for label, u in profiles.items():
            ax.plot(x, u, lw=1.5, label=label)
        ax.set_xlabel("x")
        if len(profiles) > 1:
            ax.legend(fontsize=8)
    else:
        label, u = next(iter(profiles.items()))
        cs = ax.tricontourf(grid.coords[:, 0], grid.coords[:, 1], u, levels=20)
        fig.colorbar(cs, ax=ax, label=label)
        ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    return _save(fig, path)


__all__ = ["BRANCH_COLUMNS", "branch_figure", "fmt", "profile_figure", "read_solutions_csv",
           "write_branch_csv", "write_json", "write_profile_csv", "write_rows",
           "write_solutions_csv"]
