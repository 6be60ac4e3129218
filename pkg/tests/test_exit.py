from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exitdim.acceptance import lazy_path_kernel
from exitdim.exit import (
    ball_region,
    exit_residual,
    exit_tail_estimate,
    monte_carlo_exit,
    region_from_mask,
    simulate_exit_times,
    solve_exit_times,
    unreachable_states,
)
from exitdim.kernels import WalkKernel, ball_kernel_p, ball_kernel_w
from exitdim.spaces import FiniteSpace, build_euclidean

import scipy.sparse as sp


def thomas_exact(n: int) -> list:
    """Exact rational Thomas solve of (I - P) phi = 1 on 1..n-1 (P = 1/3 on k-1, k, k+1)."""
    m = n - 1
    a = b = Fraction(-1, 3)
    d = Fraction(2, 3)
    cp, dp = [], []
    for i in range(m):
        denom = d - (a * cp[-1] if i else 0)
        cp.append(b / denom)
        dp.append((1 - (a * dp[-1] if i else 0)) / denom)
    x = [Fraction(0)] * m
    x[-1] = dp[-1]
    for i in range(m - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


def interior(K, n):
    mask = np.zeros(n + 1, dtype=bool)
    mask[1:-1] = True
    return region_from_mask(K, mask, center=n // 2)


@pytest.mark.parametrize("n", [2, 3, 10, 57])
def test_path_exact_rational_oracle(n):
    K = lazy_path_kernel(n)
    phi = solve_exit_times(K, interior(K, n)).values
    exact = thomas_exact(n)
    assert [Fraction(3, 2) * k * (n - k) for k in range(1, n)] == exact
    np.testing.assert_allclose(phi[1:-1], [float(x) for x in exact], rtol=0, atol=1e-10)


def test_path_large_n():
    n = 1000
    K = lazy_path_kernel(n)
    phi = solve_exit_times(K, interior(K, n)).values
    k = np.arange(n + 1)
    assert np.max(np.abs(phi - 1.5 * k * (n - k))) < 1e-9


def _single_state(a: float, tau: float) -> WalkKernel:
    space = FiniteSpace(np.array([[0.0], [1.0]]), np.ones(2))
    P = sp.csr_matrix(np.array([[a, 1 - a], [1 - a, a]]))
    return WalkKernel(space, np.arange(2), P, np.array([tau, tau]), np.ones(2), np.ones(2), "toy", 1.0)


@given(st.floats(0.0, 0.99), st.floats(0.1, 10.0))
def test_single_state_geometric(a, tau):
    K = _single_state(a, tau)
    reg = region_from_mask(K, [True, False])
    phi = solve_exit_times(K, reg)
    assert phi.values[0] == pytest.approx(tau / (1 - a), rel=1e-12)
    assert phi.values[1] == 0.0


def test_unreachable_complement_raises():
    space = FiniteSpace(np.arange(3.0)[:, None], np.ones(3))
    P = sp.csr_matrix(np.array([[0.5, 0.5, 0], [0.5, 0.5, 0], [0, 0, 1.0]]))
    K = WalkKernel(space, np.arange(3), P, np.ones(3), np.ones(3), np.ones(3), "toy", 1.0)
    reg = region_from_mask(K, [True, True, False])
    np.testing.assert_array_equal(unreachable_states(K, reg), [0, 1])
    with pytest.raises(ValueError, match="unreachable"):
        solve_exit_times(K, reg)


def test_ball_covering_everything_rejected(gasket6):
    K = ball_kernel_w(gasket6, 0.1)
    with pytest.raises(ValueError):
        ball_region(K, 0, 10.0)


def test_cg_agrees_with_direct():
    space = build_euclidean(2, 0.3, 0.02)
    K = ball_kernel_w(space, 0.08)
    reg = ball_region(K, space.nearest([0, 0]), 0.3)
    a = solve_exit_times(K, reg, method="direct").values
    b = solve_exit_times(K, reg, method="cg").values
    assert np.max(np.abs(a - b)) / a.max() < 1e-7


def test_residual_small(koch6):
    K = ball_kernel_p(koch6, 0.05, 2.2)
    reg = ball_region(K, 300, 0.2)
    f = solve_exit_times(K, reg)
    assert exit_residual(K, reg, f.values) < 1e-12 * max(1, f.max())


def test_monte_carlo_deterministic_and_consistent():
    K = lazy_path_kernel(10)
    reg = interior(K, 10)
    a = monte_carlo_exit(K, reg, 5, 5000, seed=11)
    b = monte_carlo_exit(K, reg, 5, 5000, seed=11)
    assert a == b
    assert abs(a["mean"] - 37.5) < 4 * a["stderr"]
    one = monte_carlo_exit(K, reg, 5, 1, seed=0)
    assert np.isnan(one["stderr"])


def test_monte_carlo_start_outside():
    K = lazy_path_kernel(10)
    with pytest.raises(ValueError):
        simulate_exit_times(K, interior(K, 10), 0, 10)


def test_tail_estimate_monotone():
    K = lazy_path_kernel(20)
    reg = interior(K, 20)
    ts = np.linspace(0, 600, 13)
    p = exit_tail_estimate(K, reg, 10, ts, 4000, seed=3)
    assert np.all(np.diff(p) >= 0)
    assert p[0] == 0.0 and p[-1] <= 1.0
    assert exit_tail_estimate(K, reg, 10, 50.0, 4000, seed=3) == p[1]
