"""Figure rendering for the report path: iteration/timing plots for
comparison matrices and trajectory plots for single runs, written next to the
CSV output."""

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_COLORS = {"full": "tab:blue", "split": "tab:red"}


def _style(formulation):
    base = "full" if formulation.startswith("full") else "split"
    return _COLORS[base]


def render_comparison_figures(results, out_dir):
    """Per-step iteration counts and wall-time bars for every arm.

    Returns the list of files written.  Failed arms are skipped.
    """
    os.makedirs(out_dir, exist_ok=True)
    done = [r for r in results if not r.failed]
    if not done:
        return []
    paths = []

    step_sizes = sorted({r.h for r in done}, reverse=True)
    fig, axes = plt.subplots(len(step_sizes), 1, sharex=True,
                             figsize=(7, 2.6 * len(step_sizes)), squeeze=False)
    for ax, h in zip(axes[:, 0], step_sizes):
        for r in done:
            if r.h != h:
                continue
            t = [s.t for s in r.report.steps]
            it = [s.iterations for s in r.report.steps]
            ax.step(t, it, where="post", label=r.formulation,
                    color=_style(r.formulation), lw=1.2)
        ax.set_ylabel("iterations")
        ax.set_title(f"h = {h:.6g} s", fontsize=10)
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("time (s)")
    fig.tight_layout()
    p = os.path.join(out_dir, "iterations.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(figsize=(7, 3))
    labels = [r.arm for r in done]
    walls = [r.report.wall_time_s for r in done]
    ax.bar(labels, walls, color=[_style(r.formulation) for r in done])
    ax.set_ylabel("wall time (s)")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    p = os.path.join(out_dir, "timing.png")
    fig.savefig(p, dpi=150)
    plt.close(fig)
    paths.append(p)
    return paths


def render_trajectory_figure(trajectory, out_dir, filename="trajectory.png"):
    """Rotor speeds and bus voltage magnitudes over time."""
    os.makedirs(out_dir, exist_ok=True)
    omega_cols = [n for n in trajectory.names if n.endswith(".omega")]
    v_cols = [n for n in trajectory.names
              if n.startswith("bus") and n.endswith(".v")]

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(7, 5))
    for name in omega_cols:
        ax1.plot(trajectory.times, trajectory.column(name), lw=1.0, label=name)
    ax1.set_ylabel("rotor speed (pu)")
    if omega_cols:
        ax1.legend(fontsize=7)
    ax1.grid(alpha=0.3)
    for name in v_cols:
        ax2.plot(trajectory.times, trajectory.column(name), lw=1.0, label=name)
    ax2.set_ylabel("bus voltage (pu)")
    ax2.set_xlabel("time (s)")
    if len(v_cols) <= 14:
        ax2.legend(fontsize=7)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    p = os.path.join(out_dir, filename)
    fig.savefig(p, dpi=150)
    plt.close(fig)
    return p
