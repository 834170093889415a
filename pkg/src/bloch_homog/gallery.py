"""Worked examples and application operators, each with closed-form references."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import PeriodicMatrixField, block_diag_field, pointwise_map, product, scalar_field
from .lattice import Lattice
from .model import MatrixSymbol, OperatorModel


@dataclass
class GalleryEntry:
    name: str
    model: OperatorModel
    references: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _grad_symbol(d: int) -> MatrixSymbol:
    """b(D) = D, i.e. b(xi) = xi as a d x 1 column."""
    return MatrixSymbol(np.eye(d).reshape(d, d, 1))


# --------------------------------------------------------------------------- 1D
SCALAR_PROFILES: dict[str, dict[tuple, complex]] = {
    "2+sin": {(0,): 2.0, (1,): -0.5j, (-1,): 0.5j},
    "2+cos": {(0,): 2.0, (1,): 0.5, (-1,): 0.5},
    "const": {(0,): 1.0},
}


def scalar_1d(profile: str | dict = "2+sin", period: float = 2 * np.pi) -> GalleryEntry:
    """Scalar operator D g(x) D on the line; g given by name or Fourier dictionary."""
    coeffs = SCALAR_PROFILES[profile] if isinstance(profile, str) else profile
    lat = Lattice([[period]])
    g = PeriodicMatrixField.from_fourier(coeffs, lat, name="g")
    if g.min_eigenvalue() <= 0:
        raise ValueError("scalar profile must be positive")
    model = OperatorModel(lat, _grad_symbol(1), g, name=f"scalar_1d[{profile if isinstance(profile, str) else 'custom'}]")
    refs = {"N_hat_identically_zero": True}
    fine = g.resample((4096,))
    refs["g0"] = float(np.real(fine.harmonic_mean()[0, 0]))
    if profile in ("2+sin", "2+cos"):
        refs["g0"] = float(np.sqrt(3.0))
    if profile == "const":
        refs["g0"] = 1.0
    cfg = {"model": {"lattice": [[period]], "symbol": [[[1.0]]],
                     "g": {"fourier": _records(coeffs)}}}
    return GalleryEntry(model.name, model, refs, cfg)


def _records(coeffs: dict) -> list[dict]:
    out = []
    for k, v in coeffs.items():
        M = np.atleast_2d(np.asarray(v, dtype=complex))
        out.append({"kappa": list(k), "value": [[[float(z.real), float(z.imag)] for z in row] for row in M]})
    return out


# ------------------------------------------- two-dimensional crossing model
def example_8_7() -> GalleryEntry:
    """d = 2, n = 2, m = 3 model with g = diag(1, g2(x1), g3(x1))."""
    lat = Lattice.cubic(2)
    b1 = np.array([[1, 0], [0, 0.5], [0, 0]], dtype=complex)
    b2 = np.array([[0, 0], [0.5, 0], [0, 1]], dtype=complex)
    sym = MatrixSymbol(np.stack([b1, b2]))

    def gfun(x):
        out = np.zeros((len(x), 3, 3), dtype=complex)
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 4.0 / (1.0 + 0.5 * np.sin(x[:, 0]))
        out[:, 2, 2] = 1.0 + 0.5 * np.cos(x[:, 0])
        return out

    g = PeriodicMatrixField.from_function(gfun, lat, (3, 3), grid_shape=(64, 64), name="g")
    model = OperatorModel(lat, sym, g, name="example_8_7")
    refs = {
        "g0": np.diag([1.0, 4.0, 1.0]),
        "gamma(theta)": "1 + theta1*theta2 and 1 - theta1*theta2",
        "mu_at_(0,1)": [-0.125, 0.125],
        "N_hat_at_(1,0)": np.zeros((2, 2)),
        "L23_over_theta2": 0.25j,
        "Lambda22": "-i cos x1",
    }
    cfg = {"gallery": {"name": "example_8_7"}}
    return GalleryEntry("example_8_7", model, refs, cfg)


# ---------------------------------------------- complex Hermitian scalar model
def example_15_1(c: float = 0.2) -> GalleryEntry:
    """Scalar d = 2 operator D* g D with g = [[1, i beta'], [-i beta', 1]]."""
    if not 0 < c < 1.0 / 3.0:
        raise ValueError("c must lie in (0, 1/3)")
    lat = Lattice.cubic(2)

    def dbeta(x):
        return c * (np.cos(x[:, 0]) - 2.0 * np.sin(2.0 * x[:, 0]))

    def gfun(x):
        bp = dbeta(x)
        out = np.empty((len(x), 2, 2), dtype=complex)
        out[:, 0, 0] = 1.0
        out[:, 1, 1] = 1.0
        out[:, 0, 1] = 1j * bp
        out[:, 1, 0] = -1j * bp
        return out

    g = PeriodicMatrixField.from_function(gfun, lat, (2, 2), bandwidth=2, name="g")
    margin = float((1.0 - dbeta(_grid(lat, g.grid_shape)) ** 2).min())
    if margin <= 0:
        raise ValueError("positivity 1 - beta'^2 > 0 fails on the grid")
    model = OperatorModel(lat, _grad_symbol(2), g, name=f"example_15_1[c={c}]")
    refs = {
        "N_hat(theta)": "1.5 c^3 theta2^3",
        "N_hat_coefficient": 1.5 * c**3,
        "mu_at_(0,1)": 1.5 * c**3,
        "mu_at_(1,0)": 0.0,
        "positivity_margin": margin,
    }
    return GalleryEntry(model.name, model, refs, {"gallery": {"name": "example_15_1", "c": c}})


def _grid(lat, grid_shape):
    from .fields import grid_points

    return grid_points(lat, grid_shape).reshape(-1, lat.dim)


# ------------------------------------------------------ factorized Schrodinger
def schrodinger_factorized(omega: Callable[[np.ndarray], np.ndarray] | None = None,
                           g_check: PeriodicMatrixField | None = None, lattice: Lattice | None = None,
                           grid_shape=None, name: str = "schrodinger_factorized") -> GalleryEntry:
    """H = w^{-1} D* w^2 g_check D w^{-1}: f = w^{-1}, g = w^2 g_check, with mean(w^2) = 1 enforced."""
    lat = lattice or Lattice.cubic(1)
    d = lat.dim
    if omega is None:
        omega = lambda x: np.exp(0.3 * np.sin(x[:, 0]))  # noqa: E731
    raw = scalar_field(omega, lat, grid_shape, name="omega_raw")
    if raw.min_eigenvalue() <= 0 or np.abs(raw.samples.imag).max() > 1e-14:
        raise ValueError("omega must be real and positive on the grid")
    fine = raw.resample(tuple(max(256, n) for n in raw.grid_shape) if d == 1 else raw.grid_shape)
    norm = float(np.sqrt(np.mean(np.abs(fine.samples) ** 2)))
    w = scalar_field(lambda x: np.real(omega(x)) / norm, lat, raw.grid_shape, name="omega")
    if g_check is None:
        g_check = PeriodicMatrixField.constant(np.eye(d), lat, raw.grid_shape, name="g_check")
    eye_n = np.eye(1)
    f = pointwise_map(lambda a: eye_n / a, w, name="f")
    w2 = pointwise_map(lambda a: a * a, w, name="omega^2")
    g = pointwise_map(lambda a, G: a * G, w2, g_check, name="g")
    model = OperatorModel(lat, _grad_symbol(d), g, f, name=name)
    refs = {"Q_bar": 1.0, "f0": 1.0, "normalizer": norm,
            "N_Q_identically_zero": bool(g_check.real_flag and g_check.hermitian_flag)}
    extras = {"omega": w, "g_check": g_check, "potential": lambda: schrodinger_potential(w, g_check)}
    return GalleryEntry(name, model, refs, {"gallery": {"name": "schrodinger_factorized"}}, extras)


def schrodinger_potential(w: PeriodicMatrixField, g_check: PeriodicMatrixField) -> np.ndarray:
    """Grid samples of V = w^{-1} sum_jk d_j (g_check_jk d_k w), by spectral differentiation."""
    lat = w.lattice
    d = lat.dim
    grid = w.grid_shape
    gc = g_check.resample(grid).samples
    kap = np.stack(np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in grid], indexing="ij"), -1)
    xi = kap @ lat.dual_basis
    wh = np.fft.fftn(w.samples[..., 0, 0])
    grad = [np.fft.ifftn(1j * xi[..., k] * wh) for k in range(d)]
    flux = [sum(gc[..., j, k] * grad[k] for k in range(d)) for j in range(d)]
    div = sum(np.fft.ifftn(1j * xi[..., j] * np.fft.fftn(flux[j])) for j in range(d))
    return np.real(div / w.samples[..., 0, 0])


# ----------------------------------------------------------------------- Pauli
def pauli_symbol() -> MatrixSymbol:
    b1 = np.array([[0, 1], [1, 0]], dtype=complex)
    b2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
    return MatrixSymbol(np.stack([b1, b2]))


def pauli(phi: Callable[[np.ndarray], np.ndarray] | None = None,
          omega_minus_sq: Callable[[np.ndarray], np.ndarray] | None = None,
          grid_shape=(64, 64), name: str = "pauli", center_phi: bool = True) -> GalleryEntry:
    """Pauli operator P = f b(D) g b(D) f with f = diag(w+, w-), g = f^2, w_pm = exp(+-phi).

    Either ``phi`` (re-centred to mean zero when ``center_phi``) or the profile
    ``omega_minus_sq`` = w_-^2 may be given; in the latter case phi = -log(w_-^2)/2
    is used as is, since only w_+ w_- = 1 matters for the factorization.
    """
    lat = Lattice.cubic(2)
    if omega_minus_sq is not None:
        phifun = lambda x: -0.5 * np.log(np.real(omega_minus_sq(x)))  # noqa: E731
    else:
        phi = phi or (lambda x: np.zeros(len(x)))
        shift = 0.0
        if center_phi:
            probe = scalar_field(phi, lat, grid_shape)
            shift = float(np.real(probe.mean()[0, 0]))
        phifun = lambda x: np.real(phi(x)) - shift  # noqa: E731
    wp = scalar_field(lambda x: np.exp(phifun(x)), lat, grid_shape, name="omega_plus")
    wm = scalar_field(lambda x: np.exp(-phifun(x)), lat, grid_shape, name="omega_minus")
    f = block_diag_field(wp, wm, name="f")
    g = product(f, f, name="g")
    model = OperatorModel(lat, pauli_symbol(), g, f, name=name)
    refs = pauli_closed_forms(wp, wm)
    extras = {"omega_plus": wp, "omega_minus": wm,
              "phi_mean": float(np.real(scalar_field(phifun, lat, grid_shape).mean()[0, 0]))}
    return GalleryEntry(name, model, refs, {"gallery": {"name": name}}, extras)


def example_16_2(alpha: float = 1.0 / 16.0, grid_shape=(64, 64)) -> GalleryEntry:
    """Pauli operator with w_-^2 = 1 + alpha (sin x2 + 4 sin 2 x2)."""
    wm2 = lambda x: 1.0 + alpha * (np.sin(x[:, 1]) + 4.0 * np.sin(2.0 * x[:, 1]))  # noqa: E731
    e = pauli(omega_minus_sq=wm2, grid_shape=grid_shape, name=f"example_16_2[alpha={alpha}]")
    e.references["g0_plus_expected"] = 1.0
    e.references["v_plus_expected"] = "alpha (cos x2 + 2 cos 2 x2)"
    e.config = {"gallery": {"name": "example_16_2", "alpha": alpha}}
    return e


def _solve_dbar(rhs: np.ndarray, lat: Lattice, sign: int) -> np.ndarray:
    """Mean-zero solution of (D1 - sign*i D2) v = rhs by Fourier division on the full grid."""
    grid = rhs.shape
    kap = np.stack(np.meshgrid(*[np.fft.fftfreq(n, 1.0 / n) for n in grid], indexing="ij"), -1)
    xi = kap @ lat.dual_basis
    sym = xi[..., 0] - sign * 1j * xi[..., 1]
    rh = np.fft.fftn(rhs)
    vh = np.zeros_like(rh)
    nz = np.abs(sym) > 0
    vh[nz] = rh[nz] / sym[nz]
    return np.fft.ifftn(vh)


def pauli_closed_forms(wp: PeriodicMatrixField, wm: PeriodicMatrixField) -> dict:
    """Dedicated formulas for the Pauli blocks, independent of the generic cell solver."""
    lat = wp.lattice
    p2 = np.real(wp.samples[..., 0, 0]) ** 2
    m2 = np.real(wm.samples[..., 0, 0]) ** 2
    g0p = 1.0 / np.mean(1.0 / p2)
    g0m = 1.0 / np.mean(1.0 / m2)
    gamma = g0p * g0m
    v_p = _solve_dbar(g0p * m2 - 1.0, lat, +1)
    v_m = _solve_dbar(g0m * p2 - 1.0, lat, -1)
    mp = complex(np.mean(p2 * v_p))
    mm = complex(np.mean(m2 * v_m))

    def NQ_plus(theta):
        return -2.0 * gamma * (theta[0] * mp.real + theta[1] * mp.imag)

    def NQ_minus(theta):
        return -2.0 * gamma * (theta[0] * mm.real - theta[1] * mm.imag)

    return {
        "g0_plus": g0p,
        "g0_minus": g0m,
        "gamma": gamma,
        "mean_wp2_vp": mp,
        "mean_wm2_vm": mm,
        "v_plus_samples": v_p,
        "v_minus_samples": v_m,
        "N_Q_plus": NQ_plus,
        "N_Q_minus": NQ_minus,
        "mu_plus": lambda th: g0m * NQ_plus(th),
        "mu_minus": lambda th: g0p * NQ_minus(th),
    }


def pauli_block(entry: GalleryEntry, which: str) -> OperatorModel:
    """Scalar model of the block P_+ (which='+') or P_- (which='-').

    P_+ has b(xi) = xi1 - i xi2, g = w_+^2, f = w_-; P_- has b(xi) = xi1 + i xi2,
    g = w_-^2, f = w_+.
    """
    wp, wm = entry.extras["omega_plus"], entry.extras["omega_minus"]
    lat = wp.lattice
    if which == "+":
        sym = MatrixSymbol(np.array([[[1.0]], [[-1j]]]))
        g, f = product(wp, wp), wm
    elif which == "-":
        sym = MatrixSymbol(np.array([[[1.0]], [[1j]]]))
        g, f = product(wm, wm), wp
    else:
        raise ValueError("which must be '+' or '-'")
    return OperatorModel(lat, sym, g, f, name=f"{entry.name}:P{which}")


# -------------------------------------------------------------------- registry
REGISTRY: dict[str, Callable[..., GalleryEntry]] = {
    "scalar_1d": scalar_1d,
    "example_8_7": example_8_7,
    "example_15_1": example_15_1,
    "schrodinger_factorized": schrodinger_factorized,
    "pauli": pauli,
    "example_16_2": example_16_2,
}

DESCRIPTIONS = {
    "scalar_1d": "scalar D g D on the line, default g = 2 + sin x",
    "example_8_7": "d=2, n=2, m=3 model with a germ eigenvalue crossing",
    "example_15_1": "d=2 scalar operator with complex Hermitian g, parameter c",
    "schrodinger_factorized": "w^{-1} D* w^2 g_check D w^{-1}, default d=1, w ~ exp(0.3 sin x)",
    "pauli": "two-dimensional Pauli operator built from a potential phi",
    "example_16_2": "Pauli operator with w_-^2 = 1 + alpha (sin x2 + 4 sin 2x2)",
    "magnetic_schrodinger": "not provided: needs an externally supplied factorization",
}


def list_entries() -> list[str]:
    return list(REGISTRY)


def get(name: str, **kw) -> GalleryEntry:
    if name == "magnetic_schrodinger":
        raise NotImplementedError(
            "the magnetic Schrodinger operator enters only through a factorization whose "
            "existence comes from external results; construct it and pass the factors directly")
    if name not in REGISTRY:
        raise KeyError(f"unknown gallery entry {name!r}; known: {', '.join(REGISTRY)}")
    return REGISTRY[name](**kw)
