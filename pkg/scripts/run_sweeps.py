"""Operator-error sweeps for the gallery models, with tail-slope diagnostics.

Writes one CSV per case plus a combined log-log SVG into the output directory
and prints the fitted slope over the whole ladder and over its last four points.

    python3 scripts/run_sweeps.py --out out/sweeps
    python3 scripts/run_sweeps.py --only scalar-s2 --tau 2
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from bloch_homog import gallery
from bloch_homog.effective import compute_effective
from bloch_homog.io import loglog_svg, write_csv, write_svg
from bloch_homog.propagate import DEFAULT_EPS, error_sweep, fit_slope

SMALL_LADDER = [2.0**-j for j in range(8, 14)]

# name -> (gallery entry, params, K, n_k, s, sandwiched, eps ladder)
CASES = {
    "scalar-s3": ("scalar_1d", {}, 8, 32, 3.0, False, DEFAULT_EPS),
    "scalar-s2": ("scalar_1d", {}, 8, 32, 2.0, False, DEFAULT_EPS),
    "complex-s3": ("example_15_1", {"c": 0.2}, 6, 16, 3.0, False, DEFAULT_EPS),
    "complex-s2-small": ("example_15_1", {"c": 0.2}, 6, 16, 2.0, False, SMALL_LADDER),
    "pauli-s3": ("example_16_2", {}, 6, 16, 3.0, True, DEFAULT_EPS),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--out", default="out/sweeps")
    ap.add_argument("--only", nargs="*", choices=sorted(CASES))
    ap.add_argument("--tau", type=float, default=1.0)
    args = ap.parse_args()
    out = Path(args.out)
    series = {}
    for name in args.only or CASES:
        entry_name, params, K, n_k, s, sandwiched, ladder = CASES[name]
        t0 = time.perf_counter()
        entry = gallery.get(entry_name, **params)
        eff = compute_effective(entry.model, K)
        sw = error_sweep(entry.model, eff, eps_ladder=ladder, tau=args.tau, s=s, n_k=n_k,
                         sandwiched=sandwiched)
        tail, _ = fit_slope(sw.eps[-4:], sw.eta[-4:])
        write_csv(out / f"{name}.csv", ["epsilon", "eta", "bound_shape"], sw.rows())
        series[name] = (sw.eps, sw.eta)
        print(f"{name:18s} slope {sw.slope:.3f}  last four {tail:.3f}  "
              f"({sw.n_points} k-points, {time.perf_counter() - t0:.1f}s)")
    write_svg(out / "sweeps.svg", loglog_svg(series, title=f"operator error, tau = {args.tau:g}"))


if __name__ == "__main__":
    main()
