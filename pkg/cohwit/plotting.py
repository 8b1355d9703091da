"""
cohwit.plotting

Static figures of the CSV files the runner writes.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from cohwit.runner import read_footer  # noqa: E402

STYLE = {
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "font.family": "serif",
    "figure.figsize": [5.0, 3.4],
    "figure.dpi": 150,
}


def _read(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def plot_traces(paths: list[Path], target: Path) -> Path:
    fig, ax = plt.subplots()
    for path in paths:
        frame = _read(path)
        footer = read_footer(path)
        ax.plot(frame["T"], frame["S_PP"], label=f"{footer.get('engine', '')} sigma={footer.get('sigma', '?')}")
    ax.set_xlabel("T [1/omega_0]")
    ax.set_ylabel("S_PP")
    ax.legend()
    fig.tight_layout()
    fig.savefig(target)
    plt.close(fig)
    return target


def plot_spectrum(curve: Path, sticks: Path | None, target: Path) -> Path:
    fig, ax = plt.subplots()
    frame = _read(curve)
    ax.plot(frame["frequency"], frame["intensity"], color="k")
    footer = read_footer(curve)
    if sticks is not None and sticks.exists():
        s = _read(sticks)
        scale = frame["intensity"].max() / max(s["weight"].max(), 1e-300)
        ax.vlines(s["frequency"], 0, s["weight"] * scale, color="tab:blue", lw=1)
    if "mean" in footer:
        ax.axvline(float(footer["mean"]), color="tab:red", ls="--", label=f"mean {float(footer['mean']):.4g}")
        ax.legend()
    ax.set_xlabel("omega [omega_0]")
    ax.set_ylabel("intensity")
    fig.tight_layout()
    fig.savefig(target)
    plt.close(fig)
    return target


def plot_witness(path: Path, target: Path) -> Path:
    frame = _read(path)
    footer = read_footer(path)
    fig, ax = plt.subplots()
    ax.plot(frame["sigma"], frame["gamma"], "o-", color="k")
    if footer.get("T_W_sigma", "none") != "none":
        ax.axvline(float(footer["T_W_sigma"]), color="tab:red", ls="--", label="T_W")
    if footer.get("T_A", "inf") not in ("inf", "none"):
        ax.axvline(float(footer["T_A"]), color="tab:blue", ls=":", label="T_A")
    ax.set_xlabel("sigma [1/omega_0]")
    ax.set_ylabel("Gamma")
    ax.set_title(footer.get("classification", ""))
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(target)
    plt.close(fig)
    return target


def plot_sweep(path: Path, target: Path) -> Path:
    frame = _read(path)
    axis = frame.columns[0]
    fig, (top, bottom) = plt.subplots(2, 1, sharex=True, figsize=(5.0, 5.0))
    for centering, group in frame.groupby("centering", sort=False):
        top.plot(group[axis], group["T_W_sigma"], "o-", label=centering)
        bottom.plot(group[axis], group["center_freq"], "o-", label=centering)
    first = frame.drop_duplicates(axis)
    top.plot(first[axis], first["T_A"], "k--", label="T_A")
    top.set_ylabel("T_W [1/omega_0]")
    bottom.set_ylabel("center [omega_0]")
    bottom.set_xlabel(axis)
    top.legend()
    fig.tight_layout()
    fig.savefig(target)
    plt.close(fig)
    return target


def render_directory(directory: Path) -> list[Path]:
    directory = Path(directory)
    written = []
    with plt.rc_context(STYLE):
        for engine in ("grid", "sos"):
            traces = sorted(directory.glob(f"pumpprobe_{engine}_*.csv"))
            if traces:
                written.append(plot_traces(traces, directory / f"pumpprobe_{engine}.png"))
        for kind in ("absorption", "raman"):
            curve = directory / f"{kind}_curve.csv"
            if curve.exists():
                written.append(plot_spectrum(curve, directory / f"{kind}_sticks.csv", directory / f"{kind}.png"))
        if (path := directory / "witness.csv").exists():
            written.append(plot_witness(path, directory / "witness.png"))
        if (path := directory / "sweep.csv").exists():
            written.append(plot_sweep(path, directory / "sweep.png"))
    return written
