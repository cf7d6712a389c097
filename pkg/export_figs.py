#!/usr/bin/env python3
"""
Render the convergence and control figures of a run directory
as PNG files next to its CSVs.

Usage:  python export_figs.py [RUN_DIR]
"""
import pathlib
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

ROOT = pathlib.Path(__file__).resolve().parent
sys.path.insert(0, str(ROOT))

from ensemble_pmp.report import read_control, read_convergence  # noqa: E402


def plot_metric(conv, column: str, ylabel: str, path: pathlib.Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(conv["k"], conv[column], "o-")
    ax.set_xlabel("k")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_control(control, path: pathlib.Path):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(control["t"], control["u"], color="grey", label="optimized control")
    ax.plot(control["t"], control["singular_feedback"], "r--", label="singular feedback")
    ax.set_xlabel("t")
    ax.set_ylabel("u(t)")
    psi_ax = ax.twinx()
    psi_ax.plot(control["t"], control["psi"], color="tab:blue", linewidth=0.8, label="switching function")
    psi_ax.axhline(0.0, color="tab:blue", linewidth=0.4, alpha=0.5)
    psi_ax.set_ylabel("Psi(t)", color="tab:blue")
    lines = ax.get_lines()[:2] + psi_ax.get_lines()[:1]
    ax.legend(lines, [line.get_label() for line in lines], loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main(run_dir: pathlib.Path) -> int:
    if not (run_dir / "convergence.csv").exists():
        print(f"❌ No convergence.csv in {run_dir}")
        return 1
    conv = read_convergence(run_dir)
    control = read_control(run_dir)
    plot_metric(conv, "rel_J", "|J(k-1) - J(k)| / |J(k-1)|", run_dir / "rel_J.png")
    plot_metric(conv, "rel_u", "|u(k-1) - u(k)| / |u(k-1)|", run_dir / "rel_u.png")
    plot_control(control, run_dir / "control.png")
    print(f"✅ Figures written to {run_dir}")
    return 0


if __name__ == "__main__":
    target = pathlib.Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "output"
    sys.exit(main(target))
