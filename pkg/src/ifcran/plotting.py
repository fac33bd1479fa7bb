"""Render outage-rate curves from a sweep CSV (``ifcran-plot``)."""

import argparse
from collections import defaultdict
import logging
import os
import sys

from .exceptions import ConfigError
from .sweep import read_csv

log = logging.getLogger(__name__)

_LABELS = {"suc": "SUC", "wz_exhaustive": "WZ", "wz_greedy": "WZ (greedy order)", "bt": "BT",
           "ifsc_sym": "IFSC", "ifsc_asym": "AIFSC", "ifsc_local": "IFSC",
           "ifsc_opportunistic": "Opportunistic IFSC", "ml": "ML", "mmse": "MMSE",
           "mmse_sic": "MMSE-SIC", "ifcc": "IFCC"}


def curve_label(source, decoder):
    return f"{_LABELS.get(source, source)} + {_LABELS.get(decoder, decoder)}"


def group_rows(rows):
    """Group rows into figures, one per scenario, with curves keyed by pair.

    The x axis is ``c_sym`` unless only ``snr_db`` varies within a group.
    Returns ``{figure_key: (x_name, {(source, decoder): [(x, y), ...]})}``.
    """
    by_scen = defaultdict(list)
    for r in rows:
        by_scen[(r["K"], r["L"], r["csir"], r["rho"], r["N"], r["seed"])].append(r)
    figures = {}
    for key, rs in by_scen.items():
        snrs = sorted({r["snr_db"] for r in rs})
        cs = sorted({r["c_sym"] for r in rs})
        if len(cs) > 1 or len(snrs) == 1:
            for snr in snrs:
                curves = defaultdict(list)
                for r in rs:
                    if r["snr_db"] == snr:
                        curves[(r["source"], r["decoder"])].append((r["c_sym"], r["outage_rate_bits"]))
                figures[key + (("snr_db", snr),)] = ("c_sym", _sorted(curves))
        else:
            curves = defaultdict(list)
            for r in rs:
                curves[(r["source"], r["decoder"])].append((r["snr_db"], r["outage_rate_bits"]))
            figures[key + (("c_sym", cs[0]),)] = ("snr_db", _sorted(curves))
    return figures


def _sorted(curves):
    return {k: sorted(v) for k, v in sorted(curves.items())}


def render(rows, out_dir, fmt="png"):
    """Write one figure per group to ``out_dir``; returns the file paths."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for key, (xname, curves) in group_rows(rows).items():
        K, L, csir, rho, N, seed, (fixed_name, fixed) = key
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for (source, decoder), pts in curves.items():
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker="o", label=curve_label(source, decoder))
        ax.set_xlabel(r"$C_{\mathrm{sym}}$ (bits)" if xname == "c_sym" else "SNR (dB)")
        ax.set_ylabel(f"{rho:.0%} outage rate per user (bits)")
        fixed_txt = f"SNR = {fixed:g} dB" if fixed_name == "snr_db" else f"C_sym = {fixed:g}"
        ax.set_title(f"K = {K}, L = {L}, {csir} CSIR, {fixed_txt}")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        name = f"outage_K{K}_L{L}_{csir}_{fixed_name}{fixed:g}.{fmt}"
        path = os.path.join(out_dir, name)
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def main(argv=None):
    p = argparse.ArgumentParser(prog="ifcran-plot",
                                description="Plot outage-rate curves from a sweep CSV.")
    p.add_argument("csv", help="CSV written by ifcran-sweep")
    p.add_argument("--out-dir", default="figures", help="directory for the images")
    p.add_argument("--format", default="png", help="image format understood by matplotlib")
    args = p.parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    try:
        rows = read_csv(args.csv)
    except (OSError, ConfigError) as exc:
        log.error("cannot read %s: %s", args.csv, exc)
        return 2
    for path in render(rows, args.out_dir, args.format):
        log.info("wrote %s", path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
