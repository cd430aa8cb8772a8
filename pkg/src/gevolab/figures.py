"""Matplotlib renderings written next to the delimited reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_symbol_constants(report_rows, path) -> Path:
    """Bar chart of the measured certification constants per field."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    labels, worsts = [], []
    for row in report_rows:
        labels.append(row["label"])
        worsts.append(max(row["best_constants"].values()))
    ax.bar(labels, worsts, color="#4878d0")
    if report_rows:
        ax.axhline(report_rows[0]["cap"], color="crimson", ls="--",
                   label="cap")
        ax.legend()
    ax.set_ylabel("worst measured constant")
    ax.set_yscale("log")
    ax.set_title("symbol order certification")
    return _save(fig, Path(path))


def render_invert_ladder(hs, residuals, slope, target, path) -> Path:
    """Log-log residual-vs-h ladder with the fitted and nominal slopes."""
    hs = np.asarray(hs, float)
    residuals = np.asarray(residuals, float)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.loglog(hs, residuals, "o-", label="measured residual norm")
    anchor = residuals[0]
    ax.loglog(hs, anchor * (hs / hs[0]) ** slope, "--",
              label=f"fit slope {slope:.3f}")
    ax.loglog(hs, anchor * (hs / hs[0]) ** target, ":",
              label=f"nominal slope {target:.3f}")
    ax.set_xlabel("frequency shift h")
    ax.set_ylabel("residual norm")
    ax.legend()
    ax.set_title("invertibility ladder")
    return _save(fig, Path(path))


def render_energy_trace(times, l2, hm, v_norms, v_times, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    ax.semilogy(times, l2, label="L2 norm")
    ax.semilogy(times, hm, label="H^m norm")
    if v_norms is not None:
        ax.semilogy(v_times, v_norms, label="transformed norm")
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.legend()
    ax.set_title("energy trace")
    return _save(fig, Path(path))


def render_spectra(snapshots, xi_grid, path, n_curves: int = 6) -> Path:
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    stride = max(1, len(snapshots) // n_curves)
    pos = xi_grid > 0
    for t_snap, spec in snapshots[::stride]:
        ax.semilogy(xi_grid[pos], np.maximum(spec[pos], 1e-300),
                    label=f"t = {t_snap:.3f}")
    ax.set_xlabel("xi")
    ax.set_ylabel("|u_hat|")
    ax.legend(fontsize=8)
    ax.set_title("spectrum snapshots")
    return _save(fig, Path(path))


def render_probe_fits(results, path) -> Path:
    """Radius evolution per tested index, one panel; q_hat in the title."""
    fig, ax = plt.subplots(figsize=(6.5, 4.2))
    for res in results:
        ts = [t for t, _ in res.rho_fit]
        rhos = [r for _, r in res.rho_fit]
        ax.plot(ts, rhos, "o-",
                label=f"theta={res.theta_tested:g} ({res.verdict})")
    ax.set_xlabel("t")
    ax.set_ylabel("fitted radius")
    qhats = ", ".join(f"{res.q_hat:.3f}" for res in results)
    ax.set_title(f"radius persistence (q_hat: {qhats})")
    ax.legend(fontsize=8)
    return _save(fig, Path(path))
