import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _models import random_model
from bloch_homog import gallery
from bloch_homog.bloch import extract_threshold_coeffs
from bloch_homog.effective import compute_effective
from bloch_homog.fields import PeriodicMatrixField
from bloch_homog.germ import (L_matrix, N_hat, condition_check, corrector_polynomial, germ_at,
                              germ_eigen, germ_matrix)
from bloch_homog.lattice import sphere_directions
from bloch_homog.model import OperatorModel, threshold_params

angles = st.floats(0.0, 2 * np.pi)


def unit(phi):
    return np.array([np.cos(phi), np.sin(phi)])


@given(angles)
def test_hermitian_and_homogeneous(complex_scalar, phi):
    e, eff = complex_scalar
    th = unit(phi)
    S = germ_matrix(eff.g0, e.model.symbol, th)
    L = L_matrix(eff, th)
    N = N_hat(L, e.model.symbol, th).N_hat
    for M in (S, L, N):
        assert np.abs(M - M.conj().T).max() < 1e-12
    for s in (-1.0, 2.0):
        assert np.allclose(germ_matrix(eff.g0, e.model.symbol, s * th), s**2 * S, atol=1e-12)
        Ns = N_hat(L_matrix(eff, s * th), e.model.symbol, s * th).N_hat
        assert np.allclose(Ns, s**3 * N, atol=1e-12)


@given(angles)
def test_real_case_quadratic_form_vanishes(crossing, phi):
    e, eff = crossing
    th = unit(phi)
    N = N_hat(L_matrix(eff, th), e.model.symbol, th).N_hat
    for q in (np.array([1.0, 0.0]), np.array([0.6, 0.8]), np.array([0.0, 1.0])):
        assert abs(q @ N @ q) <= 1e-10


def test_germ_lower_bound(crossing, complex_scalar):
    for e, eff in (crossing, complex_scalar):
        c_hat = threshold_params(e.model).c_star_hat
        for th in sphere_directions(2, 64):
            g, _ = germ_at(eff, th)
            assert g.gamma.min() >= c_hat - 1e-9


def test_crossing_model_references(crossing):
    e, eff = crossing
    g, c = germ_at(eff, [0.0, 1.0])
    assert np.allclose(sorted(c.mu), [-0.125, 0.125], atol=1e-10)
    g, c = germ_at(eff, [1.0, 0.0])
    assert np.abs(c.N_hat).max() < 1e-12
    th = unit(0.3)
    g, _ = germ_at(eff, th)
    assert np.allclose(g.gamma, sorted([1 - th[0] * th[1], 1 + th[0] * th[1]]), atol=1e-9)


@given(angles)
def test_complex_scalar_formula(complex_scalar, phi):
    e, eff = complex_scalar
    th = unit(phi)
    _, c = germ_at(eff, th)
    assert c.mu[0] == pytest.approx(1.5 * 0.2**3 * th[1] ** 3, abs=1e-10)


def test_polynomial_certificates(scalar, crossing):
    assert np.abs(corrector_polynomial(scalar[1])).max() <= 1e-10
    assert np.abs(corrector_polynomial(crossing[1])).max() == pytest.approx(0.125, abs=1e-10)


@settings(max_examples=6)
@given(st.integers(0, 10_000))
def test_square_symbol_certificate(seed):
    m = random_model(np.random.default_rng(seed), 2, 2, 2)
    eff = compute_effective(m, 8)
    assert np.abs(corrector_polynomial(eff)).max() <= 1e-10


def test_identity_f_path_matches(complex_scalar):
    e, eff = complex_scalar
    m = e.model
    mf = OperatorModel(m.lattice, m.symbol, m.g, PeriodicMatrixField.constant([[1.0]], m.lattice))
    effq = compute_effective(mf, eff.cutoff)
    for th in sphere_directions(2, 8):
        a = germ_at(eff, th, weighted=False)[1].N_hat
        b = germ_at(effq, th, weighted=True)[1].N_hat
        assert np.abs(a - b).max() <= 1e-12


def test_fit_oracle_a_few_directions(complex_scalar):
    e, eff = complex_scalar
    for th in sphere_directions(2, 4):
        fit = extract_threshold_coeffs(e.model, th, K=eff.cutoff)
        g, c = germ_at(eff, th)
        assert np.abs(fit.gamma - g.gamma).max() <= 1e-6
        assert np.abs(fit.mu - c.mu).max() <= 1e-5


def test_germ_eigen_clusters():
    ge = germ_eigen(np.diag([1.0, 1.0 + 1e-12, 2.0]))
    assert [len(c) for c in ge.clusters] == [2, 1]


def test_condition_taxonomy(scalar, crossing, complex_scalar):
    rep = condition_check(scalar[0].model, scalar[1], n_theta=16)
    assert rep.verdicts["N_identically_zero"] and rep.verdicts["coupled_branches_separate"]
    assert rep.t_circ is not None and rep.t_circ > 0
    rep = condition_check(crossing[0].model, crossing[1], n_theta=64)
    assert not rep.verdicts["N0_identically_zero"]
    assert rep.N0_max == pytest.approx(0.125, abs=1e-9)
    rep = condition_check(complex_scalar[0].model, complex_scalar[1], n_theta=64)
    assert not rep.verdicts["N_identically_zero"] and rep.t_circ is None
    header = rep.table_header()
    assert header[:2] == ["theta_1", "theta_2"] and header[-1] == "cluster_sizes"
    assert len(rep.table_rows()) == 64


def test_schrodinger_weighted_corrector_vanishes():
    e = gallery.schrodinger_factorized()
    eff = compute_effective(e.model, 8)
    assert np.abs(corrector_polynomial(eff, weighted=True)).max() <= 1e-10
    assert np.allclose(eff.Q_bar, 1.0, atol=1e-12) and np.allclose(eff.f0, 1.0, atol=1e-12)
