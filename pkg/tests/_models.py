"""Random trigonometric-polynomial models shared by property and acceptance tests."""

import itertools

import numpy as np

from bloch_homog.fields import PeriodicMatrixField
from bloch_homog.lattice import Lattice
from bloch_homog.model import MatrixSymbol, OperatorModel, alpha_bounds


def random_model(rng: np.random.Generator, d: int, n: int, m: int, bandwidth: int = 1,
                 real: bool = False, with_f: bool = False) -> OperatorModel:
    if real and m == 1 and d > 1:
        # a real scalar symbol b_1 xi_1 + ... + b_d xi_d always has a nontrivial kernel
        raise ValueError("no elliptic real scalar symbol exists for d > 1")
    lat = Lattice.cubic(d) if d == 1 else Lattice(np.array([[2 * np.pi, 0.0], [0.7, 5.5]]))
    for _ in range(1000):
        b = rng.normal(size=(d, m, n)) + (0 if real else 1j) * rng.normal(size=(d, m, n))
        sym = MatrixSymbol(b)
        if alpha_bounds(sym)[0] > 0.05:
            break
    else:
        raise RuntimeError("could not draw a well-conditioned elliptic symbol")
    g = _positive_field(rng, lat, m, bandwidth, real)
    f = _positive_field(rng, lat, n, bandwidth, real) if with_f else None
    return OperatorModel(lat, sym, g, f, name=f"random d={d} n={n} m={m}")


def _positive_field(rng, lat, size, bandwidth, real):
    coeffs = {}
    for kap in itertools.product(range(-bandwidth, bandwidth + 1), repeat=lat.dim):
        neg = tuple(-k for k in kap)
        if kap in coeffs:
            continue
        if all(k == 0 for k in kap):
            continue
        C = rng.normal(size=(size, size)) + (0 if real else 1j) * rng.normal(size=(size, size))
        if real:
            C = C + C.T  # real symmetric Fourier pair -> cosine terms only
        coeffs[kap] = C
        coeffs[neg] = C.conj().T
    total = sum(np.linalg.norm(C, 2) for C in coeffs.values())
    scale = 0.8 / max(total, 1e-12)
    out = {k: scale * v for k, v in coeffs.items()}
    A = rng.normal(size=(size, size))
    out[(0,) * lat.dim] = np.eye(size) + 0.2 * A @ A.T
    return PeriodicMatrixField.from_fourier(out, lat, name="g")
