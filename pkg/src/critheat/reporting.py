"""Delimited outputs and figure rendering for experiment runs.

Every CSV starts with a comment block naming the dimension, exponent,
grid and config hash, then a header row.  Floats are written with %.17g
so reruns of the same config and seed produce bit-identical files.
Figures are rendered beside the CSVs with the Agg backend.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "write_csv",
    "write_field",
    "config_hash",
    "write_manifest",
    "plot_run",
    "plot_spectrum",
    "plot_modulation",
    "plot_selfsim",
    "plot_sweep",
    "plot_bisection",
    "plot_minimal",
]

_FLOAT_FMT = "%.17g"


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return _FLOAT_FMT % float(x)


def config_hash(config_dict: dict) -> str:
    canonical = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def write_csv(path: Path, comments: dict, columns: dict[str, np.ndarray]) -> Path:
    """Columnar CSV with a '#'-prefixed metadata block."""
    path = Path(path)
    names = list(columns)
    arrays = [np.atleast_1d(np.asarray(columns[k])) for k in names]
    length = max(a.size for a in arrays) if arrays else 0
    lines = [f"# {k} = {_fmt(v)}" for k, v in comments.items()]
    lines.append(",".join(names))
    for i in range(length):
        row = [_fmt(a[i]) if i < a.size else "" for a in arrays]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_field(path: Path, r: np.ndarray, u: np.ndarray, comments: dict) -> Path:
    """Columnar (r, u) field file with a metadata header."""
    return write_csv(path, comments, {"r": r, "u": u})


def write_manifest(out_dir: Path, cfg_hash: str, entries: list[Path]) -> Path:
    """JSON manifest naming every output with sha256 of the data files."""
    out_dir = Path(out_dir)
    items = []
    for path in sorted(entries):
        rec = {"name": path.name}
        if path.suffix in (".csv", ".json", ".txt"):
            rec["sha256"] = hashlib.sha256(path.read_bytes()).hexdigest()
        items.append(rec)
    manifest = {"config_hash": cfg_hash, "files": items}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def plot_run(record, path: Path) -> Path:
    """Sup-norm / Dirichlet-norm / energy traces and the final profile."""
    fig, axes = plt.subplots(2, 2, figsize=(9, 6))
    ax = axes[0, 0]
    ax.semilogy(record.times, record.linf_trace, lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|u\|_\infty$")
    ax = axes[0, 1]
    ax.semilogy(record.times, record.h1dot_trace, lw=1, color="tab:orange")
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|u\|_{\dot H^1}$")
    ax = axes[1, 0]
    ax.plot(record.times, record.energy_trace, lw=1, color="tab:green")
    ax.set_xlabel("t")
    ax.set_ylabel("E(u)")
    ax = axes[1, 1]
    final = record.final_state
    ax.semilogx(
        np.maximum(final.grid.nodes, final.grid.nodes[1]),
        final.values,
        lw=1,
        color="tab:red",
    )
    ax.set_xlabel("r")
    ax.set_ylabel(f"u(r, t={record.t_final:.3g})")
    fig.suptitle(f"verdict: {record.verdict}")
    fig.tight_layout()
    return _save(fig, path)


def plot_spectrum(spec, zero_mode_pairs, path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    r = spec.grid.nodes
    ax = axes[0]
    ax.plot(r, spec.y.values, lw=1)
    ax.set_xlim(0, 40)
    ax.set_xlabel("r")
    ax.set_title(f"unstable mode, e0 = {spec.e0:.6f}")
    ax = axes[1]
    ax.plot(r, spec.psi0.values, lw=1, color="tab:orange")
    ax.set_xlim(0, 3 * spec.m_loc)
    ax.set_xlabel("r")
    ax.set_title("orthogonality profile")
    ax = axes[2]
    for pair in zero_mode_pairs:
        ax.loglog(
            np.maximum(pair.gamma_nodes, 1e-7),
            np.abs(pair.gamma_values),
            lw=1,
            label=f"n={pair.n}: slope {pair.origin_exponent:.2f}",
        )
    ax.set_xlabel("r")
    ax.set_title("singular zero modes")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_modulation(trace, path: Path) -> Path:
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    s = trace.s
    ax = axes[0]
    ax.semilogy(s, np.abs(trace.array("a")), lw=1)
    ax.set_xlabel("s")
    ax.set_ylabel("|a|")
    ax = axes[1]
    ax.plot(s, trace.array("lam"), lw=1, color="tab:orange")
    ax.set_xlabel("s")
    ax.set_ylabel("scale")
    ax = axes[2]
    ax.semilogy(s, trace.array("eps_h1"), lw=1, label=r"$\dot H^1$")
    ax.semilogy(s, trace.array("eps_h2"), lw=1, label=r"$\dot H^2$")
    ax.set_xlabel("s")
    ax.set_ylabel("remainder norms")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def plot_selfsim(s_vals, e_vals, i_vals, e_target, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    ax = axes[0]
    ax.plot(s_vals, e_vals, lw=1)
    ax.axhline(e_target, color="k", ls="--", lw=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel("E(w)")
    ax = axes[1]
    ax.plot(s_vals, i_vals, lw=1, color="tab:orange")
    ax.axhline(0.0, color="k", ls="--", lw=0.8)
    ax.set_xlabel("s")
    ax.set_ylabel("I(w)")
    fig.tight_layout()
    return _save(fig, path)


def plot_bisection(levels, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    widths = [lv["width"] for lv in levels]
    trapped = [lv["trapped_time"] for lv in levels]
    ax = axes[0]
    ax.semilogy(range(len(widths)), widths, "o-", lw=1, ms=3)
    ax.set_xlabel("level")
    ax.set_ylabel("bracket width")
    ax = axes[1]
    ax.plot(range(len(trapped)), trapped, "o-", lw=1, ms=3, color="tab:orange")
    ax.set_xlabel("level")
    ax.set_ylabel("trapped time at midpoint")
    fig.tight_layout()
    return _save(fig, path)


def plot_sweep(rows, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    good = [r for r in rows if r.get("global")]
    amps = [r["amplitude"] for r in good]
    ax = axes[0]
    ax.plot(amps, [r["E0"] for r in good], "o-", lw=1, ms=3)
    ax.set_xlabel("amplitude")
    ax.set_ylabel(r"$E(w(0))$")
    ax = axes[1]
    ax.plot(amps, [r["spacetime_integral"] for r in good], "o-", lw=1, ms=3,
            color="tab:orange")
    ax.set_xlabel("amplitude")
    ax.set_ylabel("space-time integral")
    fig.tight_layout()
    return _save(fig, path)


def plot_minimal(approxs, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    ax = axes[0]
    for ap in approxs:
        ax.semilogy(ap.times, np.abs(ap.a_trace), lw=1, label=f"n={ap.depth}")
    ax.set_xlabel("t")
    ax.set_ylabel("|a(t)|")
    ax.legend(fontsize=7)
    ax = axes[1]
    for ap in approxs:
        ax.semilogy(ap.times, np.maximum(ap.v_linf_trace, 1e-300), lw=1)
    ax.set_xlabel("t")
    ax.set_ylabel(r"$\|v\|_\infty$")
    fig.tight_layout()
    return _save(fig, path)
