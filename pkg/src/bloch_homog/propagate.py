"""Fiber exponentials, smoothing, smoothed error functionals, sharpness and Cauchy checks.

Every epsilon enters through the phase tau / eps^2 and the smoothing diagonal;
exponentials are exact (eigendecomposition), so no time stepping is involved.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize, minimize_scalar

from .bloch import Discretization, FiberOperator
from .effective import EffectiveData
from .germ import germ_at
from .lattice import in_parallelepiped, k_grid, sphere_directions
from .model import OperatorModel, threshold_params

DEFAULT_EPS = tuple(2.0 ** -np.arange(3, 9))


def worker_count(requested: int | None = None) -> int:
    env = os.environ.get("BLOCH_HOMOG_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(requested or 1))


def fit_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of log y against log x."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, icpt = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(icpt)


def fiber_exponential(H, tau_eff: float, Q: np.ndarray | None = None) -> np.ndarray:
    """exp(-i tau_eff Q^{-1} H) via the (generalized) eigendecomposition of Hermitian H."""
    if isinstance(H, FiberOperator):
        H, Q = H.A_hat, H.Q
    H = np.asarray(H)
    if Q is None:
        w, V = np.linalg.eigh(H)
        return (V * np.exp(-1j * tau_eff * w)) @ V.conj().T
    w, V = sla.eigh(H, Q)
    return (V * np.exp(-1j * tau_eff * w)) @ (V.conj().T @ Q)


@dataclass
class SmoothingOperator:
    k: np.ndarray
    eps: float
    s: float
    diag: np.ndarray  # per (frequency, component)
    zero_slice: slice

    @property
    def norm(self) -> float:
        return float(self.diag.max())

    def norm_off_constants(self) -> float:
        mask = np.ones(len(self.diag), bool)
        mask[self.zero_slice] = False
        return float(self.diag[mask].max())


def smoothing_symbol(freq_vectors: np.ndarray, k, eps: float, s: float, n: int) -> np.ndarray:
    q2 = ((freq_vectors + np.asarray(k, float)[None, :]) ** 2).sum(axis=1)
    r = eps**s * (q2 + eps**2) ** (-s / 2.0)
    return np.repeat(r, n)


def smoothing_operator(disc: Discretization, k, eps: float, s: float) -> SmoothingOperator:
    z = disc.freqs.zero_index * disc.n
    return SmoothingOperator(np.asarray(k, float), eps, s,
                             smoothing_symbol(disc.freqs.vectors, k, eps, s, disc.n),
                             slice(z, z + disc.n))


class FiberErrorEvaluator:
    """Smoothed exponential differences at a fiber, reusing one eigendecomposition for all eps.

    ``sandwiched`` selects the f-dressed propagators, which in the variable
    v = f u read exp(-i tau Q_K^{-1} A_hat) against exp(-i tau Qbar^{-1} A_hat0).
    """

    def __init__(self, model: OperatorModel, eff: EffectiveData, K: int | None = None,
                 sandwiched: bool = False):
        K = eff.cutoff if K is None else K
        if K != eff.cutoff:
            raise ValueError("fibers and effective data must use the same cutoff")
        self.model, self.eff = model, eff
        self.sandwiched = bool(sandwiched and model.has_f)
        self.disc = Discretization(model, K, g0=eff.g0, use_f=self.sandwiched)
        self.Qbar = eff.Q_bar if self.sandwiched else None

    def prepare(self, k) -> dict:
        k = np.asarray(k, float)
        fib = self.disc.fiber(k)
        E, V = [], []
        for idx in self.disc.groups:
            Ab = fib.A_hat[np.ix_(idx, idx)]
            if fib.Q is None:
                w, v = np.linalg.eigh(Ab)
                VhQ = v.conj().T
            else:
                Qg = fib.Q[np.ix_(idx, idx)]
                w, v = sla.eigh(Ab, Qg)
                VhQ = v.conj().T @ Qg
            E.append(w)
            V.append((v, VhQ))
        blocks = self.disc.effective_blocks(k, self.eff.g0)
        if self.Qbar is None:
            w0, v0 = np.linalg.eigh(blocks)
            v0hQ = v0.conj().transpose(0, 2, 1)
        else:
            F = blocks.shape[0]
            w0 = np.empty((F, self.disc.n))
            v0 = np.empty((F, self.disc.n, self.disc.n), complex)
            for a in range(F):
                w0[a], v0[a] = sla.eigh(blocks[a], self.Qbar)
            v0hQ = v0.conj().transpose(0, 2, 1) @ self.Qbar
        return {"k": k, "E": E, "V": V, "w0": w0, "v0": v0, "v0hQ": v0hQ}

    def _U0(self, pd: dict, tau_eff: float) -> np.ndarray:
        ph = np.exp(-1j * tau_eff * pd["w0"])
        blocks = np.einsum("aij,aj,ajk->aik", pd["v0"], ph, pd["v0hQ"])
        return sla.block_diag(*blocks)

    def difference_blocks(self, pd: dict, eps: float, tau: float, s: float) -> list[np.ndarray]:
        tau_eff = tau / eps**2
        r = smoothing_symbol(self.disc.freqs.vectors, pd["k"], eps, s, self.disc.n)
        U0 = self._U0(pd, tau_eff)
        out = []
        for idx, w, (v, vhq) in zip(self.disc.groups, pd["E"], pd["V"]):
            U = (v * np.exp(-1j * tau_eff * w)) @ vhq
            out.append((U - U0[np.ix_(idx, idx)]) * r[idx][None, :])
        return out

    def norm(self, pd: dict, eps: float, tau: float, s: float, floor: float = -1.0) -> float:
        """Spectral norm; groups whose Frobenius norm is below ``floor`` are skipped."""
        best = 0.0
        for M in self.difference_blocks(pd, eps, tau, s):
            fro = np.linalg.norm(M)
            if fro <= max(best, floor):
                continue
            best = max(best, float(np.linalg.norm(M, 2)))
        return best

    def __call__(self, k, eps: float, tau: float, s: float) -> float:
        return self.norm(self.prepare(k), eps, tau, s)


def fiber_error_norm(model: OperatorModel, eff: EffectiveData, k, eps: float, tau: float, s: float,
                     sandwiched: bool = False) -> float:
    return FiberErrorEvaluator(model, eff, sandwiched=sandwiched)(k, eps, tau, s)


@dataclass
class ErrorSweep:
    tau: float
    s: float
    eps: np.ndarray
    eta: np.ndarray
    argmax: np.ndarray
    slope: float
    intercept: float
    cutoff: int
    n_k: int
    n_points: int
    sandwiched: bool
    runtime: float
    identically_small: bool = False
    notes: list[str] = field(default_factory=list)

    def verdict(self, lo: float = 0.85, hi: float = 1.15) -> bool:
        return (not self.identically_small) and lo <= self.slope <= hi

    def rows(self) -> list[list[float]]:
        ref = self.eta[0] * self.eps / self.eps[0]
        return [[float(e), float(v), float(b)] for e, v, b in zip(self.eps, self.eta, ref)]

    def to_dict(self) -> dict:
        return {"tau": self.tau, "s": self.s, "eps": self.eps.tolist(), "eta": self.eta.tolist(),
                "argmax_k": self.argmax.tolist(), "slope": self.slope, "intercept": self.intercept,
                "cutoff": self.cutoff, "n_k": self.n_k, "n_points": self.n_points,
                "sandwiched": self.sandwiched, "runtime_s": self.runtime,
                "identically_small": self.identically_small, "notes": self.notes}


def sweep_points(model: OperatorModel, eps_ladder, n_k: int, n_dirs: int = 16,
                 radial_points: int = 32, base_radii=(0.5, 1.0, 2.0)) -> np.ndarray:
    """Uniform grid plus radial enrichment toward k = 0.

    Enrichment along ``n_dirs`` directions: the radii c eps^(2/3) for c in
    ``base_radii`` and every eps, and a geometric ladder of ``radial_points``
    radii from min(eps)/8 up to r0 that also resolves the scale |k| ~ eps.
    """
    lat = model.lattice
    pts, _ = k_grid(lat, n_k)
    dirs = sphere_directions(lat.dim, n_dirs)
    rad = [c * e ** (2.0 / 3.0) for e in eps_ladder for c in base_radii]
    if radial_points:
        rad += list(np.geomspace(min(eps_ladder) / 8.0, lat.r0, radial_points))
    rad = np.unique(np.asarray(rad))
    extra = (rad[:, None, None] * dirs[None, :, :]).reshape(-1, lat.dim)
    allp = np.vstack([extra, pts])
    return allp[in_parallelepiped(lat, allp)]


def error_sweep(model: OperatorModel, eff: EffectiveData, eps_ladder=DEFAULT_EPS, tau: float = 1.0,
                s: float = 3.0, n_k: int = 16, n_dirs: int = 16, radial_points: int = 32,
                refine: bool = True, sandwiched: bool = False, workers: int | None = None,
                points: np.ndarray | None = None) -> ErrorSweep:
    """eta_s(eps) = max over k of the smoothed exponential difference, and its log-log slope."""
    t_start = time.perf_counter()
    eps = np.asarray(sorted(eps_ladder, reverse=True), dtype=float)
    if len(eps) < 4:
        raise ValueError("slope fits need at least 4 eps values")
    ev = FiberErrorEvaluator(model, eff, sandwiched=sandwiched)
    if points is None:
        points = sweep_points(model, eps, n_k, n_dirs, radial_points)
    best = np.zeros(len(eps))
    arg = np.zeros((len(eps), model.dim))

    def visit(pd):
        for i, e in enumerate(eps):
            v = ev.norm(pd, e, tau, s, floor=best[i])
            if v > best[i]:
                best[i], arg[i] = v, pd["k"]

    nw = worker_count(workers)
    if nw > 1:
        with ThreadPoolExecutor(nw) as pool:
            for lo in range(0, len(points), 4 * nw):
                for pd in pool.map(ev.prepare, points[lo:lo + 4 * nw]):
                    visit(pd)
    else:
        for k in points:
            visit(ev.prepare(k))
    notes = []
    if refine:
        lat = model.lattice
        for i, e in enumerate(eps):
            k0 = arg[i].copy()

            def neg(k, e=e):
                k = np.atleast_1d(k)
                if not in_parallelepiped(lat, k):
                    return 0.0
                return -ev(k, e, tau, s)

            scale = max(np.linalg.norm(k0), e) * 0.25
            if model.dim == 1:
                lo, hi = k0[0] - scale, k0[0] + scale
                r = minimize_scalar(lambda x: neg(np.array([x])), bounds=(lo, hi), method="bounded",
                                    options={"xatol": 1e-4 * scale, "maxiter": 40})
                cand, val = np.array([r.x]), -r.fun
            else:
                simplex = np.vstack([k0] + [k0 + scale * np.eye(model.dim)[j] for j in range(model.dim)])
                r = minimize(neg, k0, method="Nelder-Mead",
                             options={"initial_simplex": simplex, "maxfev": 60, "xatol": 1e-6,
                                      "fatol": 1e-12})
                cand, val = r.x, -r.fun
            if val > best[i]:
                best[i], arg[i] = val, cand
        notes.append("local maximization around the best grid point for every eps")
    small = bool(np.all(best < 1e-13))
    if small:
        slope, icpt = float("nan"), float("nan")
    else:
        slope, icpt = fit_slope(eps, np.maximum(best, 1e-300))
    return ErrorSweep(tau, s, eps, best, arg, slope, icpt, eff.cutoff, n_k, len(points),
                      ev.sandwiched, time.perf_counter() - t_start, small, notes)


def sandwiched_error_sweep(model: OperatorModel, eff: EffectiveData, **kw) -> ErrorSweep:
    kw["sandwiched"] = True
    return error_sweep(model, eff, **kw)


# --------------------------------------------------------------------- sharpness
@dataclass
class SharpnessReport:
    theta0: np.ndarray
    mu: float
    tau: float
    s: float
    eps: np.ndarray
    t: np.ndarray
    eta: np.ndarray
    exponent: float
    expected: float
    runtime: float

    def to_dict(self) -> dict:
        return {"theta0": self.theta0.tolist(), "mu": self.mu, "tau": self.tau, "s": self.s,
                "eps": self.eps.tolist(), "t": self.t.tolist(), "eta": self.eta.tolist(),
                "ratio": (self.eta / self.eps).tolist(), "exponent": self.exponent,
                "expected": self.expected, "runtime_s": self.runtime}


def probe_ladder(model: OperatorModel, mu: float, tau: float, weighted: bool, count: int = 6,
                 fraction: float = 0.5) -> np.ndarray:
    """eps values whose probe points t(eps) run from fraction*t0 down by factors 2^(2/3)."""
    tp = threshold_params(model)
    t0 = tp.t0 if weighted else tp.t0_hat
    C = np.pi ** (1.0 / 3.0) * abs(mu * tau) ** (-1.0 / 3.0)
    e_max = (fraction * t0 / C) ** 1.5
    return e_max * 2.0 ** -np.arange(count)


def sharpness_probe(model: OperatorModel, eff: EffectiveData, theta0, tau: float = 1.0, s: float = 2.0,
                    eps_ladder=None, sandwiched: bool | None = None, branch: int | None = None) -> SharpnessReport:
    """Error at k = t(eps) theta0, t(eps) = pi^(1/3) |mu tau|^(-1/3) eps^(2/3); fits the exponent of eta/eps."""
    t_start = time.perf_counter()
    if sandwiched is None:
        sandwiched = model.has_f
    theta0 = np.asarray(theta0, float)
    theta0 = theta0 / np.linalg.norm(theta0)
    _, corr = germ_at(eff, theta0, weighted=sandwiched)
    j = int(np.argmax(np.abs(corr.mu))) if branch is None else branch
    mu = float(corr.mu[j])
    if abs(mu) <= 1e-12:
        raise ValueError("mu(theta0) vanishes; the sharpness probe is meaningless there")
    if eps_ladder is None:
        eps_ladder = probe_ladder(model, mu, tau, sandwiched)
    eps = np.asarray(sorted(eps_ladder, reverse=True), float)
    tvals = np.pi ** (1.0 / 3.0) * abs(mu * tau) ** (-1.0 / 3.0) * eps ** (2.0 / 3.0)
    ev = FiberErrorEvaluator(model, eff, sandwiched=sandwiched)
    eta = np.array([ev(t * theta0, e, tau, s) for t, e in zip(tvals, eps)])
    slope, _ = fit_slope(eps, eta / eps)
    return SharpnessReport(theta0, mu, tau, s, eps, tvals, eta, slope, s / 3.0 - 1.0,
                           time.perf_counter() - t_start)


# ------------------------------------------------------------------------ Cauchy
@dataclass
class CauchyErrorReport:
    tau: float
    s: float
    eps: np.ndarray
    error: np.ndarray
    phi_norm: float
    phi_hs_norm: float
    normalized: np.ndarray
    slope: float
    sigma: float
    truncated_nodes: list[int]
    runtime: float
    description: str = (
        "phi is fixed in x-space through its Fourier profile; for each eps the Bloch data "
        "of phi with respect to the eps-lattice are sampled on a fixed frequency grid and "
        "the direct integral is replaced by that quadrature")

    def to_dict(self) -> dict:
        return {"tau": self.tau, "s": self.s, "eps": self.eps.tolist(), "error": self.error.tolist(),
                "phi_norm": self.phi_norm, "phi_Hs_norm": self.phi_hs_norm,
                "normalized": self.normalized.tolist(), "slope": self.slope, "sigma": self.sigma,
                "dropped_nodes": self.truncated_nodes, "runtime_s": self.runtime,
                "description": self.description}


def gaussian_profile(sigma: float):
    return lambda xi: np.exp(-(xi**2).sum(axis=-1) / (2.0 * sigma**2))


def cauchy_error(model: OperatorModel, eff: EffectiveData, eps_ladder=DEFAULT_EPS, tau: float = 1.0,
                 s: float = 3.0, sigma: float = 0.5, profile=None, n_xi: int = 64, half_width: float | None = None,
                 direction=None, sandwiched: bool = False, normalization_power: float | None = None) -> CauchyErrorReport:
    """L2 error of the homogenized Cauchy solution for a fixed initial datum phi.

    phi has Fourier transform ``profile(xi) * direction`` (default a Gaussian
    of width ``sigma``). For the eps-lattice the fiber at quasimomentum xi
    carries the components profile(xi + b/eps); after rescaling the fiber
    operator is eps^-2 A(eps xi), so each eps reuses the unscaled fibers at
    k = eps xi. The error norm, ||phi|| and ||phi||_{H^s} all come from the
    same quadrature over a fixed xi grid.
    """
    t_start = time.perf_counter()
    prof = profile or gaussian_profile(sigma)
    d, n = model.dim, model.n
    L = 8.0 * sigma if half_width is None else half_width
    nodes_1d = (np.arange(n_xi) + 0.5) / n_xi * 2 * L - L
    xi = np.stack(np.meshgrid(*[nodes_1d] * d, indexing="ij"), -1).reshape(-1, d)
    w = (2 * L / n_xi) ** d
    e_dir = np.zeros(n, complex)
    e_dir[0] = 1.0
    if direction is not None:
        e_dir = np.asarray(direction, complex) / np.linalg.norm(direction)
    ev = FiberErrorEvaluator(model, eff, sandwiched=sandwiched)
    bvec = ev.disc.freqs.vectors
    eps = np.asarray(sorted(eps_ladder, reverse=True), float)
    err, nrm, hs, dropped = [], [], [], []
    for e in eps:
        kap = e * xi
        keep = in_parallelepiped(model.lattice, kap)
        dropped.append(int((~keep).sum()))
        e2 = n2 = h2 = 0.0
        for x, k in zip(xi[keep], kap[keep]):
            zeta = x[None, :] + bvec / e
            amp = prof(zeta)
            c = (amp[:, None] * e_dir[None, :]).reshape(-1)
            pd = ev.prepare(k)
            tau_eff = tau / e**2
            U0 = ev._U0(pd, tau_eff)
            diff = -U0 @ c
            for idx, wv, (v, vhq) in zip(ev.disc.groups, pd["E"], pd["V"]):
                diff[idx] += (v * np.exp(-1j * tau_eff * wv)) @ (vhq @ c[idx])
            e2 += w * np.vdot(diff, diff).real
            n2 += w * np.vdot(c, c).real
            h2 += w * float(((1.0 + (zeta**2).sum(axis=1)) ** s * np.abs(amp) ** 2).sum())
        err.append(np.sqrt(e2))
        nrm.append(np.sqrt(n2))
        hs.append(np.sqrt(h2))
    err = np.array(err)
    phi_norm, phi_hs = float(np.max(nrm)), float(np.max(hs))
    p = s / 3.0 if normalization_power is None else normalization_power
    slope, _ = fit_slope(eps, np.maximum(err, 1e-300))
    return CauchyErrorReport(tau, s, eps, err, phi_norm, phi_hs, err / (eps**p * phi_hs), slope, sigma,
                             dropped, time.perf_counter() - t_start)
