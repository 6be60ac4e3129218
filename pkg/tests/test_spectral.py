import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

import exitdim.spectral as spectral
from exitdim.acceptance import lazy_path_kernel
from exitdim.exit import ball_region, region_from_mask, solve_exit_times
from exitdim.kernels import WalkKernel, ball_kernel_p, ball_kernel_w
from exitdim.spaces import FiniteSpace, build_euclidean, koch_alpha_field
from exitdim.spectral import (
    bottom_eigenvalue,
    dirichlet_energy,
    energy_exit_identity,
    energy_scale_series,
    faber_krahn_constant,
    green_matrix,
    killed_operator,
    rayleigh_quotient,
    spectral_radius_killed,
    tent_function,
    tent_rayleigh,
)


def _toy(a, tau):
    space = FiniteSpace(np.array([[0.0], [1.0]]), np.ones(2))
    P = sp.csr_matrix(np.array([[a, 1 - a], [1 - a, a]]))
    K = WalkKernel(space, np.arange(2), P, np.array([tau, tau]), np.ones(2), np.ones(2), "toy", 1.0)
    return K, region_from_mask(K, [True, False])


@given(st.floats(0.0, 0.95), st.floats(0.1, 5.0))
def test_one_by_one(a, tau):
    K, reg = _toy(a, tau)
    op = killed_operator(K, reg)
    assert spectral_radius_killed(op)["rho"] == pytest.approx(a)
    G = green_matrix(op)
    assert G.G[0, 0] == pytest.approx(tau / (1 - a), rel=1e-12)
    lam = bottom_eigenvalue(op)["lambda1"]
    assert lam == pytest.approx((1 - a) / tau, rel=1e-12)
    assert lam * solve_exit_times(K, reg).max() == pytest.approx(1.0, rel=1e-12)


def _path10():
    K = lazy_path_kernel(10)
    mask = np.zeros(11, dtype=bool)
    mask[1:-1] = True
    return K, region_from_mask(K, mask, center=5)


def test_path_spectrum_against_dense_oracle():
    K, reg = _path10()
    op = killed_operator(K, reg)
    P = op.P_B.toarray()
    ev = np.linalg.eigvalsh(0.5 * (P + P.T))
    rad = spectral_radius_killed(op)
    assert rad["rho"] == pytest.approx(ev.max(), abs=1e-9)
    assert spectral_radius_killed(op, method="power")["rho"] == pytest.approx(ev.max(), abs=1e-9)
    assert rad["upper_bound"] >= rad["rho"] - 1e-15
    lam = bottom_eigenvalue(op)["lambda1"]
    assert lam == pytest.approx(2 / 3 * (1 - math.cos(math.pi / 10)), rel=1e-8)
    assert lam == pytest.approx(1 - ev.max(), rel=1e-8)


def test_min_max_sandwich(gasket6):
    K = ball_kernel_w(gasket6, 0.08)
    reg = ball_region(K, gasket6.nearest([0.5, 0.0]), 0.3)
    op = killed_operator(K, reg)
    lam = bottom_eigenvalue(op)["lambda1"]
    phi = solve_exit_times(K, reg).values[reg.mask]
    rng = np.random.default_rng(0)
    for f in (phi, np.ones(op.size), rng.random(op.size)):
        assert lam <= rayleigh_quotient(op, f) * (1 + 1e-12)


@pytest.mark.parametrize("method", ["neumann", "solve", "operator"])
def test_green_identities(gasket6, method):
    K = ball_kernel_p(gasket6, 0.08, 2.3)
    reg = ball_region(K, gasket6.nearest([0.5, 0.3]), 0.3)
    op = killed_operator(K, reg)
    G = green_matrix(op, method=method)
    phi = solve_exit_times(K, reg).values[reg.mask]
    assert np.max(np.abs(G.exit_times() - phi)) / phi.max() < 1e-8
    assert G.symmetry_violation() < 1e-8
    if G.M is not None:
        assert G.M.min() >= 0


def test_green_operator_above_dense_limit(monkeypatch, koch6):
    monkeypatch.setattr(spectral, "DENSE_GREEN_LIMIT", 10)
    K = ball_kernel_p(koch6, 0.05, 2 * koch_alpha_field(koch6).values)
    reg = ball_region(K, 2000, 0.2)
    G = green_matrix(killed_operator(K, reg))
    assert G.M is None
    phi = solve_exit_times(K, reg).values[reg.mask]
    assert np.max(np.abs(G.exit_times() - phi)) / phi.max() < 1e-8
    assert G.symmetry_violation(n_samples=20) < 1e-8


def test_energy_basic(gasket6):
    rng = np.random.default_rng(1)
    f = rng.standard_normal(gasket6.n)
    assert dirichlet_energy(gasket6, 0.1, 2.0, np.ones(gasket6.n)) == 0.0
    e = dirichlet_energy(gasket6, 0.1, 2.0, f)
    assert dirichlet_energy(gasket6, 0.1, 2.0, 2 * f) == pytest.approx(4 * e, rel=1e-12)


def test_energy_exit_identity(koch6):
    b = 2 * koch_alpha_field(koch6).values
    res = energy_exit_identity(koch6, 2000, 0.2, 0.05, b)
    assert res["rel_error"] < 1e-8


def test_tent_rayleigh(gasket6):
    c = gasket6.nearest([0.5, 0.0])
    res = tent_rayleigh(gasket6, c, 0.2, 0.1)
    assert res["ok"]
    psi = tent_function(gasket6, c, 0.2, 0.1)
    assert psi.max() <= 2 + 1e-12


def test_tent_quotient_scales_like_r2_over_R2():
    sp_ = build_euclidean(1, 1.0, 0.002)
    c = sp_.nearest([0.0])
    Rs = np.array([0.2, 0.4, 0.8])
    qs = np.array([tent_rayleigh(sp_, c, R, 0.02)["quotient"] for R in Rs])
    slope = np.polyfit(np.log(Rs), np.log(qs), 1)[0]
    assert slope == pytest.approx(-2.0, abs=0.1)


def test_energy_scale_series():
    sp_ = build_euclidean(1, 1.0, 0.002)
    x = sp_.points[:, 0]
    tent = np.maximum(0, 0.5 - np.abs(x))
    noise = np.random.default_rng(0).standard_normal(sp_.n)
    grid = 0.2 * 2.0 ** -np.arange(6)
    out = energy_scale_series(sp_, grid, 2.0, [tent, noise, np.ones(sp_.n)])
    assert out[0]["stabilization_ratio"] < 1.5
    from exitdim.exponents import fit_loglog_slope

    assert fit_loglog_slope(out[1]["series"]).slope == pytest.approx(2.0, abs=0.1)
    assert np.all(out[2]["values"] == 0) and out[2]["series"] is None


def test_faber_krahn_euclidean_sweep():
    sp_ = build_euclidean(1, 1.0, 0.004)
    res = faber_krahn_constant(sp_, [sp_.nearest([0.0])], [0.5, 0.25], lambda R: R * np.array([1 / 4, 1 / 8]), beta=2.0)
    assert 0.5 <= res["c_min"] <= res["c_max"] <= 3
    assert all(r["tent_bound"] >= r["lambda1"] for r in res["table"])
    assert all("fk_R" in r for r in res["table"])
