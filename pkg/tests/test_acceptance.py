"""Acceptance criteria, one test per criterion.

Each test prints (and records for the pytest terminal summary) a single
``CRITERION n PASS|FAIL`` line with the measured quantities. Tolerances and
runtime budgets are pinned below. Run standalone with
``python3 tests/test_acceptance.py`` to get only the summary lines.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from _models import random_model  # noqa: E402
from bloch_homog import gallery  # noqa: E402
from bloch_homog.bloch import Discretization, extract_threshold_coeffs  # noqa: E402
from bloch_homog.effective import compute_effective, converged_effective, voigt_reuss_check  # noqa: E402
from bloch_homog.germ import corrector_polynomial, germ_at  # noqa: E402
from bloch_homog.lattice import k_grid, sphere_directions  # noqa: E402
from bloch_homog.model import threshold_params  # noqa: E402
from bloch_homog.propagate import (cauchy_error, error_sweep, fiber_exponential,  # noqa: E402
                                   sharpness_probe, smoothing_operator)

EPS_LADDER = [2.0**-j for j in range(3, 9)]
SLOPE_BAND = (0.85, 1.15)
SHARPNESS_TOL = 0.1

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # standalone run
    ACCEPTANCE_LINES = []


def report(n: int, ok: bool, detail: str, runtime: float, budget: float) -> None:
    ok_all = ok and runtime < budget
    line = f"CRITERION {n:2d} {'PASS' if ok_all else 'FAIL'}  {detail}  [{runtime:.1f}s / budget {budget:.0f}s]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line
    assert runtime < budget, line


def in_band(x, band=SLOPE_BAND):
    return band[0] <= x <= band[1]


# -------------------------------------------------------------------------- 1
def test_criterion_01_effective_matrix_exactness():
    t = time.perf_counter()
    e = gallery.example_8_7()
    err87 = float(np.abs(compute_effective(e.model, 8).g0 - np.diag([1.0, 4.0, 1.0])).max())
    t87 = time.perf_counter() - t
    t = time.perf_counter()
    s = gallery.scalar_1d()
    err1 = float(abs(compute_effective(s.model, 8).g0[0, 0] - np.sqrt(3.0)))
    t1 = time.perf_counter() - t
    ok = err87 <= 1e-8 and err1 <= 1e-8 and max(t87, t1) < 1.0
    report(1, ok, f"crossing model |g0 - diag(1,4,1)| = {err87:.1e} ({t87:.2f}s), "
                  f"1D |g0 - sqrt 3| = {err1:.1e} ({t1:.2f}s)", t87 + t1, 2.0)


# -------------------------------------------------------------------------- 2
def test_criterion_02_voigt_reuss_suite():
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    shapes = [(d, n, m) for d in (1, 2) for n in (1, 2) for m in range(n, 4)]
    worst_bracket, worst_eq, fails = np.inf, 0.0, 0
    for i in range(20):
        d, n, m = shapes[i % len(shapes)]
        # real scalar symbols are never elliptic in 2D, so that shape stays complex
        real = i % 3 == 0 and not (d == 2 and m == 1)
        model = random_model(rng, d, n, m, real=real)
        eff = converged_effective(model)
        rep = voigt_reuss_check(eff.g0, model.g, n=n if m == n else None)
        worst_bracket = min(worst_bracket, rep["min_eig_upper_minus_g0"], rep["min_eig_g0_minus_lower"])
        if m == n:
            worst_eq = max(worst_eq, rep["equality_deviation"])
        fails += not rep["passed"]
    dt = time.perf_counter() - t
    report(2, fails == 0 and worst_bracket >= -1e-9 and worst_eq <= 1e-9,
           f"20 models, min bracket eigenvalue {worst_bracket:.1e}, worst m=n deviation {worst_eq:.1e}",
           dt, 30.0)


# -------------------------------------------------------------------------- 3
def test_criterion_03_germ_band_oracle():
    t = time.perf_counter()
    worst = {}
    for name, e in (("crossing", gallery.example_8_7()), ("complex", gallery.example_15_1(0.2))):
        eff = compute_effective(e.model, 8)
        disc = Discretization(e.model, 8)
        wg = wm = 0.0
        for th in sphere_directions(2, 16):
            fit = extract_threshold_coeffs(e.model, th, disc=disc)
            g, c = germ_at(eff, th)
            wg = max(wg, float(np.abs(fit.gamma - g.gamma).max()))
            wm = max(wm, float(np.abs(fit.mu - c.mu).max()))
        worst[name] = (wg, wm)
    e = gallery.example_8_7()
    fit = extract_threshold_coeffs(e.model, [0.0, 1.0], K=8)
    cluster_err = float(np.abs(np.sort(fit.mu) - [-0.125, 0.125]).max())
    dt = time.perf_counter() - t
    ok = all(wg <= 1e-6 and wm <= 1e-5 for wg, wm in worst.values()) and cluster_err <= 1e-5
    report(3, ok, "worst (gamma, mu) errors: " + ", ".join(f"{k} ({a:.1e}, {b:.1e})" for k, (a, b) in worst.items())
           + f"; fitted cluster at (0,1) off +-1/8 by {cluster_err:.1e}", dt, 120.0)


# -------------------------------------------------------------------------- 4
def test_criterion_04_vanishing_certificates():
    t = time.perf_counter()
    vals = {}
    vals["real scalar 2D"] = corrector_polynomial(compute_effective(
        random_model(np.random.default_rng(5), 2, 1, 2, real=True), 8))
    vals["1D scalar"] = corrector_polynomial(compute_effective(gallery.scalar_1d().model, 8))
    vals["m=n random"] = corrector_polynomial(compute_effective(random_model(np.random.default_rng(6), 2, 2, 2), 8))
    sch = gallery.schrodinger_factorized()
    vals["Schrodinger N_Q"] = corrector_polynomial(compute_effective(sch.model, 8), weighted=True)
    worst = {k: float(np.abs(v).max()) for k, v in vals.items()}
    dt = time.perf_counter() - t
    report(4, all(v <= 1e-10 for v in worst.values()),
           "max |coefficient|: " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()), dt, 30.0)


# -------------------------------------------------------------------------- 5
def test_criterion_05_general_rate():
    t = time.perf_counter()
    cases = (("1D 2+sin", gallery.scalar_1d(), 8, 32, False),
             ("complex c=0.2", gallery.example_15_1(0.2), 6, 16, False),
             ("Pauli alpha=1/16 sandwiched", gallery.example_16_2(), 6, 16, True))
    slopes = {}
    for name, e, K, nk, sandwiched in cases:
        eff = compute_effective(e.model, K)
        slopes[name] = error_sweep(e.model, eff, eps_ladder=EPS_LADDER, tau=1.0, s=3.0, n_k=nk,
                                   sandwiched=sandwiched).slope
    dt = time.perf_counter() - t
    report(5, all(in_band(s) for s in slopes.values()),
           "s=3 slopes: " + ", ".join(f"{k} {v:.3f}" for k, v in slopes.items()), dt, 300.0)


# -------------------------------------------------------------------------- 6
def test_criterion_06_enhanced_rate():
    t = time.perf_counter()
    e = gallery.scalar_1d()
    sw = error_sweep(e.model, compute_effective(e.model, 8), eps_ladder=EPS_LADDER, tau=1.0, s=2.0, n_k=32)
    tail = np.polyfit(np.log(sw.eps[2:]), np.log(sw.eta[2:]), 1)[0]
    dt = time.perf_counter() - t
    report(6, in_band(sw.slope), f"1D s=2 tau=1 slope {sw.slope:.3f} (last four points alone: {tail:.3f})",
           dt, 60.0)


# -------------------------------------------------------------------------- 7
def test_criterion_07_sharpness():
    t = time.perf_counter()
    e = gallery.example_15_1(0.2)
    eff = compute_effective(e.model, 6)
    r2 = sharpness_probe(e.model, eff, [0.0, 1.0], tau=1.0, s=2.0)
    r3 = sharpness_probe(e.model, eff, [0.0, 1.0], tau=1.0, s=3.0)
    dt = time.perf_counter() - t
    ok = abs(r2.exponent + 1 / 3) <= SHARPNESS_TOL and abs(r3.exponent) <= SHARPNESS_TOL
    report(7, ok, f"exponent s=2 {r2.exponent:.4f} (target -1/3), s=3 {r3.exponent:.4f} (target 0), "
                  f"eps in [{r2.eps.min():.2e}, {r2.eps.max():.2e}]", dt, 60.0)


# -------------------------------------------------------------------------- 8
def test_criterion_08_cauchy_rates():
    t = time.perf_counter()
    e = gallery.scalar_1d()
    eff = compute_effective(e.model, 8)
    r3 = cauchy_error(e.model, eff, eps_ladder=EPS_LADDER, tau=1.0, s=3.0)
    r2 = cauchy_error(e.model, eff, eps_ladder=EPS_LADDER, tau=1.0, s=2.0, normalization_power=1.0)
    dt = time.perf_counter() - t
    ok = r3.slope >= 0.85 and r2.slope >= 0.85
    report(8, ok, f"slope s=3 {r3.slope:.3f} (normalized max {r3.normalized.max():.3f}), "
                  f"s=2 {r2.slope:.3f} (normalized max {r2.normalized.max():.3f})", dt, 120.0)


# -------------------------------------------------------------------------- 9
def test_criterion_09_pauli_closed_forms():
    t = time.perf_counter()
    e = gallery.example_16_2()
    r = e.references
    K = 12
    worst = 0.0
    discs = {}
    for which in "+-":
        block = gallery.pauli_block(e, which)
        eff = compute_effective(block, K)
        g0_ref = r["g0_plus" if which == "+" else "g0_minus"]
        worst = max(worst, abs(eff.g0[0, 0] - g0_ref))
        for th in sphere_directions(2, 16):
            _, c = germ_at(eff, th, weighted=True)
            nq = r["N_Q_plus" if which == "+" else "N_Q_minus"](th)
            mu = r["mu_plus" if which == "+" else "mu_minus"](th)
            worst = max(worst, abs(c.mu[0] - mu), abs(np.real(c.N_hat[0, 0]) - nq))
        discs[which] = Discretization(block, K)
    pts, _ = k_grid(e.model.lattice, 16)
    spectral = 0.0
    for k in pts:
        a, b = discs["+"].fiber(k).energies(4), discs["-"].fiber(k).energies(4)
        spectral = max(spectral, float(np.abs(a - b).max() / max(1.0, np.abs(a).max())))
    margin = r["mean_wp2_vp"].real
    dt = time.perf_counter() - t
    report(9, worst <= 1e-8 and spectral <= 1e-9 and margin > 0,
           f"closed forms vs generic {worst:.1e}, P+/P- spectra on 16^2 grid {spectral:.1e}, "
           f"mean(w+^2 v+) = {margin:.6e}", dt, 120.0)


# ------------------------------------------------------------------------- 10
def test_criterion_10_structural_invariants():
    t = time.perf_counter()
    models = {"1D": gallery.scalar_1d().model, "crossing": gallery.example_8_7().model,
              "complex": gallery.example_15_1(0.2).model, "Schrodinger": gallery.schrodinger_factorized().model,
              "Pauli": gallery.example_16_2().model}
    problems = []
    for name, m in models.items():
        tp = threshold_params(m)
        disc = Discretization(m, 5)
        E0 = disc.fiber(np.zeros(m.dim)).energies()
        if np.count_nonzero(E0 < 1e-10) != m.n or E0.min() < -1e-10:
            problems.append(f"{name}: kernel/PSD")
        pts, _ = k_grid(m.lattice, 5)
        for k in pts:
            fib = disc.fiber(k)
            E = fib.energies(m.n + 1)
            if np.any(E[:m.n] < tp.c_star * (k @ k) - 1e-9) or E[m.n] < tp.c_star * m.lattice.r0**2 - 1e-9:
                problems.append(f"{name}: band bound at {k}")
                break
        k = pts[len(pts) // 3]
        fib = disc.fiber(k)
        U1, U2 = fiber_exponential(fib.A_matrix, 3.0), fiber_exponential(fib.A_matrix, -1.3)
        if np.abs(U1.conj().T @ U1 - np.eye(len(U1))).max() > 1e-10 or \
                np.abs(U1 @ U2 - fiber_exponential(fib.A_matrix, 1.7)).max() > 1e-9:
            problems.append(f"{name}: unitarity/group law")
        for eps, s in ((0.1, 3.0), (0.02, 2.0)):
            R = smoothing_operator(disc, k, eps, s)
            if R.norm_off_constants() > m.lattice.r0 ** -s * eps**s * (1 + 1e-12):
                problems.append(f"{name}: smoothing bound")
        if m.g.bandwidth is not None:
            # base cutoff 8: at K = 6 the second band of 2 + sin x is still 3e-7 from converged
            a = Discretization(m, 8).fiber(k).energies(m.n + 1)
            b = Discretization(m, 10).fiber(k).energies(m.n + 1)
            if np.any(np.abs(a - b) > 1e-8 * np.maximum(np.abs(b), 1.0)):
                problems.append(f"{name}: K refinement")
    dt = time.perf_counter() - t
    report(10, not problems, "5 models; " + ("all invariants hold" if not problems else "; ".join(problems)),
           dt, 180.0)


if __name__ == "__main__":
    rc = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                rc = 1
    sys.exit(rc)
