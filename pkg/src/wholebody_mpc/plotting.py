"""Static figures of a closed-loop trace.

Uses the object-oriented matplotlib API with the Agg canvas so nothing
touches pyplot's global state; safe to call from worker processes.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .loop import LOAD_ID, SimTrace, contact_intervals
from .scenario import Scenario


def height_band(scenario: Scenario, times) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vertical reference and the admissible CoM height interval around it."""
    robot = scenario.robot
    ref = scenario.vertical_reference(times)[:, 0]
    lo = np.maximum(ref - robot.reach_z, robot.com_floor)
    hi = np.minimum(ref + robot.reach_z, robot.com_ceiling)
    return ref, lo, hi


def _shade_contacts(ax, trace: SimTrace) -> None:
    end = trace.records[-1].time if trace.records else 0.0
    for cid, start, stop in contact_intervals(trace):
        ax.axvspan(start, end if stop is None else stop, color="tab:orange", alpha=0.12, lw=0)


def plot_trace(trace: SimTrace, scenario: Scenario, path, dpi: int = 120) -> None:
    """CoM height with its band, ZMP against support bounds, and contact force."""
    fig = Figure(figsize=(8.0, 9.0), constrained_layout=True)
    FigureCanvasAgg(fig)
    axes = fig.subplots(4, 1, sharex=True)
    fig.suptitle(trace.scenario_name)

    t = trace.column("time")
    if len(t) == 0:
        for ax in axes:
            ax.text(0.5, 0.5, "empty trace", ha="center", va="center", transform=ax.transAxes)
        fig.savefig(path, dpi=dpi)
        return

    com = trace.column("com")
    ref, lo, hi = height_band(scenario, t)
    ax = axes[0]
    ax.fill_between(t, lo, hi, color="tab:blue", alpha=0.15, label="admissible band")
    ax.plot(t, ref, "k--", lw=1, label="end-effector reference")
    ax.plot(t, com[:, 2], color="tab:blue", lw=1.8, label="CoM height")
    ax.set_ylabel("z [m]")
    ax.legend(loc="best", fontsize=8)

    zmp = trace.column("zmp")
    lower = trace.column("zmp_lower")
    upper = trace.column("zmp_upper")
    for ax, i, label in ((axes[1], 0, "x"), (axes[2], 1, "y")):
        ax.fill_between(t, lower[:, i], upper[:, i], step="pre", color="0.85", label="support bounds")
        ax.plot(t, zmp[:, i], color="tab:red", lw=1.4, label="ZMP")
        ax.plot(t, com[:, i], color="tab:blue", lw=1, alpha=0.7, label="CoM")
        ax.set_ylabel(f"{label} [m]")
        _shade_contacts(ax, trace)
    axes[1].legend(loc="best", fontsize=8)

    force = trace.column("force")
    ids = [r.contact_id for r in trace.records]
    ax = axes[3]
    for i, (label, color) in enumerate(zip("xyz", ("tab:red", "tab:green", "tab:blue"))):
        ax.plot(t, force[:, i], color=color, lw=1.4, label=f"f_{label}")
    _shade_contacts(ax, trace)
    if any(cid == LOAD_ID for cid in ids):
        ax.set_title("load force", fontsize=9)
    ax.set_ylabel("force [N]")
    ax.set_xlabel("time [s]")
    ax.legend(loc="best", fontsize=8)

    fig.savefig(path, dpi=dpi)
