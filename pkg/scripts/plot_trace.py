#!/usr/bin/env python3
"""
Render a trace.csv written by the simulator to a PNG figure.

Usage: python scripts/plot_trace.py results/trace.csv [--out figure.png]
"""

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

# Add the project root to Python path
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.metrics import read_trace_csv

plt.rcParams.update({
    "font.size": 9,
    "axes.grid": True,
})


def plot_trace(trace_path: Path, out_path: Path) -> Path:
    """Power, bus voltage and frequency panels over time"""
    frame = read_trace_csv(trace_path)
    if frame.empty:
        raise ValueError(f"{trace_path} has no rows to plot")
    t = frame["t"]
    vsi_powers = sorted(c for c in frame.columns if c.startswith("p_vsi"))
    bus_freqs = sorted(c for c in frame.columns if c.startswith("f_bus"))

    fig, (axP, axV, axF) = plt.subplots(3, sharex=True, figsize=(8, 9), constrained_layout=True)
    for column, label in (("p_pv", "$P_{PV}$"), ("p_bat", "$P_{bat}$"), ("p_dcload", "$P_{DC load}$")):
        axP.plot(t, frame[column] / 1000.0, label=label)
    for column in vsi_powers:
        axP.plot(t, frame[column] / 1000.0, label=f"$P_{{VSI{column[5:]}}}$")
    axP.set_ylabel("Power [kW]")
    axP.legend(loc="upper right", ncol=3)

    axV.plot(t, frame["v_dc"], label="$v_{DC}$")
    axV.plot(t, frame["v_pcc_rms"], label="$v_{PCC,rms}$")
    axV.set_ylabel("Voltage [V]")
    axV.legend(loc="upper right")

    axF.plot(t, frame["f_pcc"], label="$f_{PCC}$")
    for column in bus_freqs:
        axF.plot(t, frame[column], linestyle="--", label=f"$f_{{bus{column[5:]}}}$")
    axF.set_ylabel("Frequency [Hz]")
    axF.set_xlabel("Time [s]")
    axF.legend(loc="upper right")

    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Plot a simulator trace")
    parser.add_argument("trace", help="Path to trace.csv")
    parser.add_argument("--out", help="PNG path (default: next to the trace)")
    args = parser.parse_args(argv)

    trace_path = Path(args.trace)
    out_path = Path(args.out) if args.out else trace_path.with_suffix(".png")
    try:
        plot_trace(trace_path, out_path)
    except (OSError, ValueError, KeyError) as e:
        print(f"❌ Cannot plot {trace_path}: {e}")
        return 1
    print(f"✅ Figure written to {out_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
