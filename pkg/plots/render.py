#!/usr/bin/env python3
"""Render figures from the simulation CLI's schema=1 CSV outputs.

Usage:
    python plots/render.py --recipe recipes/collapse.ini --out collapse.png

Recipes use the same flat key=value format as the simulation configs; every
referenced CSV must declare ``# schema=1``.  Rendering is deterministic:
re-running a recipe on the same inputs reproduces the image byte for byte.
"""

from __future__ import annotations

import argparse
import math
import sys
from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_IDS = ("collapse", "heatmap-ground", "heatmap-thermal", "benchmark",
              "markov-vs-beta", "lyapunov")
DPI = 140


class RecipeError(Exception):
    pass


class DataError(Exception):
    pass


@dataclass
class FigureRecipe:
    figure_id: str
    inputs: dict
    style: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: Path) -> "FigureRecipe":
        parser = ConfigParser(delimiters=("=",), comment_prefixes=("#",))
        parser.read_string(Path(path).read_text())
        if "figure" not in parser:
            raise RecipeError("recipe needs a [figure] section")
        section = dict(parser.items("figure"))
        figure_id = section.pop("id", None)
        if figure_id not in FIGURE_IDS:
            raise RecipeError(f"unknown figure id {figure_id!r}; "
                              f"expected one of {FIGURE_IDS}")
        inputs = {}
        for key in list(section):
            if key == "input" or key.startswith("input_"):
                name = "input" if key == "input" else key[len("input_"):]
                inputs[name] = (Path(path).parent / section.pop(key)).resolve()
        if not inputs:
            raise RecipeError("recipe references no input CSVs")
        return cls(figure_id=figure_id, inputs=inputs, style=section)

    def flag(self, name: str, default: bool = False) -> bool:
        raw = self.style.get(name)
        if raw is None:
            return default
        return raw.strip().lower() in ("1", "true", "yes", "on")


def read_csv(path: Path):
    """Parse a schema=1 CSV into (header dict, column dict of arrays)."""
    if not path.exists():
        raise DataError(f"input CSV does not exist: {path}")
    meta = {}
    names = None
    rows = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
            continue
        if names is None:
            names = [c.strip() for c in line.split(",")]
            continue
        rows.append([float(v) for v in line.split(",")])
    if meta.get("schema") != "1":
        raise DataError(f"{path}: missing or unsupported schema "
                        f"(got {meta.get('schema')!r})")
    if names is None or not rows:
        raise DataError(f"{path}: no data rows")
    data = np.asarray(rows)
    return meta, {name: data[:, i] for i, name in enumerate(names)}


def require_columns(columns, needed, path):
    missing = [c for c in needed if c not in columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")


def master_curve(x):
    return 2.0 * np.exp(-x) / np.sqrt(6.0 * x)


def _new_axes():
    fig, ax = plt.subplots(figsize=(5.2, 3.9), dpi=DPI)
    return fig, ax


def render_collapse(recipe: FigureRecipe, out: Path):
    path = recipe.inputs["input"]
    _, cols = read_csv(path)
    require_columns(cols, ("t", "x", "y", "valid"), path)
    fig, ax = _new_axes()
    times = np.unique(cols["t"])
    cmap = plt.get_cmap("Purples")
    for i, t in enumerate(times):
        sel = cols["t"] == t
        shade = 0.35 + 0.6 * i / max(len(times) - 1, 1)
        ax.plot(cols["x"][sel], cols["y"][sel], "-", lw=1.0,
                color=cmap(shade), label=f"t={t:g}")
    grid = np.geomspace(max(cols["x"].min(), 0.05), cols["x"].max(), 200)
    ax.plot(grid, master_curve(grid), "r--", lw=1.4, label="master")
    ax.set_xlabel(r"$|B|/\xi_*(t)$")
    ax.set_ylabel(r"$\xi_*^2(t)\, I(A:C|B)$")
    ax.set_yscale("log")
    if recipe.flag("xlog"):
        ax.set_xscale("log")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_heatmap(recipe: FigureRecipe, out: Path):
    path = recipe.inputs["input"]
    _, cols = read_csv(path)
    require_columns(cols, ("t", "b", "i"), path)
    times = np.unique(cols["t"])
    blocks = np.unique(cols["b"])
    use_norm = recipe.flag("normalize") and "i_norm" in cols
    field_name = "i_norm" if use_norm else "i"
    grid = np.full((len(times), len(blocks)), np.nan)
    for row, (t, b, v) in enumerate(zip(cols["t"], cols["b"],
                                        cols[field_name])):
        grid[np.searchsorted(times, t), np.searchsorted(blocks, b)] = v
    if np.isnan(grid).any():
        raise DataError(f"{path}: grid has holes; heatmap needs a full scan")
    fig, ax = _new_axes()
    floor = max(grid[grid > 0].min(), 1e-300) if (grid > 0).any() else 1e-12
    shown = np.clip(grid, floor, None)
    mesh = ax.pcolormesh(blocks, times, np.log10(shown), shading="nearest",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax,
                 label=(r"$\log_{10} I/I_0$" if use_norm
                        else r"$\log_{10} I$"))
    # dashed ridge: position of the maximum per time slice
    peaks = blocks[np.argmax(grid, axis=1)]
    ax.plot(peaks, times, "k--", lw=1.2)
    ax.set_xlabel(r"$|B|$")
    ax.set_ylabel("t (sweeps)")
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_benchmark(recipe: FigureRecipe, out: Path):
    path = recipe.inputs["input"]
    _, cols = read_csv(path)
    require_columns(cols, ("t", "r", "c_mps", "c_exact"), path)
    fig, ax = _new_axes()
    times = np.unique(cols["t"])
    cmap = plt.get_cmap("viridis")
    for i, t in enumerate(times):
        sel = cols["t"] == t
        shade = 0.15 + 0.7 * i / max(len(times) - 1, 1)
        ax.plot(cols["r"][sel], np.abs(cols["c_mps"][sel]), "-",
                color=cmap(shade), lw=1.1, label=f"t={t:g}")
        ax.plot(cols["r"][sel], np.abs(cols["c_exact"][sel]), ":",
                color="black", lw=1.0)
    ax.set_yscale("log")
    ax.set_xlabel("r")
    ax.set_ylabel(r"$|C_r(t)|$")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_markov_vs_beta(recipe: FigureRecipe, out: Path):
    path = recipe.inputs["input"]
    _, cols = read_csv(path)
    require_columns(cols, ("beta_i", "xi_fit"), path)
    fig, ax = _new_axes()
    err = cols.get("xi_err")
    if err is not None:
        ax.errorbar(cols["beta_i"], cols["xi_fit"], yerr=err, fmt="ko",
                    ms=4, capsize=2, label="fit")
    else:
        ax.plot(cols["beta_i"], cols["xi_fit"], "ko", ms=4, label="fit")
    grid = np.linspace(cols["beta_i"].min() * 0.9,
                       cols["beta_i"].max() * 1.05, 200)
    ax.plot(grid, -0.5 / np.log(np.tanh(grid)), "k--", lw=1.2,
            label=r"$\xi_{\beta_i}/2$")
    ax.set_xlabel(r"$\beta_i$")
    ax.set_ylabel(r"late-time $\xi_M$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


def render_lyapunov(recipe: FigureRecipe, out: Path):
    path = recipe.inputs["input"]
    _, cols = read_csv(path)
    require_columns(cols, ("t", "xi_lyapunov"), path)
    fig, ax = _new_axes()
    ax.plot(cols["t"], cols["xi_lyapunov"], "-o", color="tab:blue", ms=3,
            label=r"$1/2w(t)$")
    fits = recipe.inputs.get("fits")
    if fits is not None:
        _, fit_cols = read_csv(fits)
        require_columns(fit_cols, ("t", "xi_fit"), fits)
        ax.plot(fit_cols["t"], fit_cols["xi_fit"], "ks", ms=4, mfc="none",
                label=r"fitted $\xi_M$")
    ax.set_xlabel("t (sweeps)")
    ax.set_ylabel(r"$\xi_M$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out)
    plt.close(fig)


RENDERERS = {
    "collapse": render_collapse,
    "heatmap-ground": render_heatmap,
    "heatmap-thermal": render_heatmap,
    "benchmark": render_benchmark,
    "markov-vs-beta": render_markov_vs_beta,
    "lyapunov": render_lyapunov,
}


def render(recipe: FigureRecipe, out: Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    RENDERERS[recipe.figure_id](recipe, out)
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--recipe", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        recipe = FigureRecipe.load(Path(args.recipe))
        render(recipe, Path(args.out))
    except (RecipeError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
