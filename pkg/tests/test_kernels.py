import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exitdim.graphs import proximity_graph
from exitdim.kernels import (
    ball_kernel_p,
    ball_kernel_w,
    build_kernel,
    detailed_balance_violation,
    dump_kernel_csv,
    generator_apply,
    graph_kernel,
    load_kernel,
    save_kernel,
    support_radius,
)
from exitdim.nets import build_epsilon_net
from exitdim.spaces import koch_alpha_field

from conftest import random_cloud


def _brute_w(sp, r):
    # independent dense construction of w_r
    D = sp.distance_matrix()
    mu = sp.weights
    B = D < r
    v = B @ mu
    raw = np.where(B, (1 + v[:, None] / v[None, :]) * mu[None, :] / v[:, None], 0.0)
    return raw / raw.sum(axis=1, keepdims=True), raw.sum(axis=1)


@given(st.integers(0, 10**6), st.floats(0.25, 0.6))
def test_ball_w_matches_dense_oracle(seed, r):
    sp = random_cloud(seed, 40)
    K = ball_kernel_w(sp, r)
    P, a = _brute_w(sp, r)
    np.testing.assert_allclose(K.P.toarray(), P, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(K.stationary_density, a, rtol=1e-12)


@given(st.integers(0, 10**6), st.floats(0.25, 0.6), st.floats(1.2, 3.0))
def test_row_sums_and_reversibility(seed, r, beta):
    sp = random_cloud(seed, 50)
    rng = np.random.default_rng(seed)
    b = beta + 0.5 * rng.random(sp.n)
    net = build_epsilon_net(sp, r / 2, seed=seed % 5)
    g = proximity_graph(sp, net, 2.0)
    kernels = [ball_kernel_w(sp, r), ball_kernel_p(sp, r, b), graph_kernel(g, sp, "uniform"), graph_kernel(g, sp, "symmetrized")]
    for K in kernels:
        assert np.max(np.abs(K.row_sums() - 1)) < 1e-12
        assert detailed_balance_violation(K, relative=True) < 1e-12


def test_uniform_graph_walk_needs_degree_density():
    # star plus a tail: counting measure does not reverse the uniform walk
    pts = np.array([[0.0], [1.0], [2.0], [3.0], [3.5]])
    from exitdim.spaces import FiniteSpace
    from exitdim.nets import NetIndex

    sp = FiniteSpace(pts, np.full(5, 0.2))
    net = NetIndex(0.5, np.arange(5))
    K = graph_kernel(proximity_graph(sp, net, 2.5), sp, "uniform")
    assert detailed_balance_violation(K) < 1e-15
    assert detailed_balance_violation(K, density=np.ones(5)) > 0.1


def test_p_equals_w_for_constant_beta(gasket6):
    W = ball_kernel_w(gasket6, 0.1)
    P = ball_kernel_p(gasket6, 0.1, 2.3)
    assert abs(W.P - P.P).max() == 0.0
    np.testing.assert_allclose(P.waiting, 0.1**2.3)


def test_p_detailed_balance_variable_beta(koch6):
    b = 2 * koch_alpha_field(koch6).values
    K = ball_kernel_p(koch6, 0.05, b)
    assert detailed_balance_violation(K) < 1e-12
    np.testing.assert_allclose(K.waiting, 0.05**b)


def test_generator_kills_constants(gasket6):
    K = ball_kernel_p(gasket6, 0.1, 2.0)
    assert np.max(np.abs(generator_apply(K, np.ones(K.n_states)))) < 1e-10
    with pytest.raises(ValueError):
        generator_apply(K, np.full(K.n_states, np.nan))


def test_support_radius(gasket6):
    K = ball_kernel_w(gasket6, 0.1)
    assert support_radius(K) < 0.1


def test_isolated_state_rejected():
    from exitdim.spaces import FiniteSpace

    sp = FiniteSpace(np.array([[0.0], [0.01], [5.0]]), np.ones(3) / 3)
    with pytest.raises(ValueError, match="isolated"):
        ball_kernel_w(sp, 0.1)


def test_build_kernel_dispatch(gasket6):
    net = build_epsilon_net(gasket6, 0.06, seed=0)
    K = build_kernel(gasket6, "graph_symmetrized", 0.06, net=net, weighted=True)
    assert K.kind == "graph_symmetrized"
    assert K.state_weights.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        build_kernel(gasket6, "ball_p", 0.1)
    with pytest.raises(ValueError):
        build_kernel(gasket6, "bogus", 0.1)


def test_save_load_and_csv(tmp_path, koch6):
    K = ball_kernel_p(koch6, 0.05, 2.0)
    save_kernel(K, tmp_path / "k.bin")
    back = load_kernel(tmp_path / "k.bin")
    assert abs(back.P - K.P).max() == 0
    np.testing.assert_array_equal(back.waiting, K.waiting)
    np.testing.assert_array_equal(back.pi, K.pi)
    dump_kernel_csv(K, tmp_path / "k.csv")
    lines = (tmp_path / "k.csv").read_text().splitlines()
    assert lines[0] == "row,col,value" and len(lines) == K.P.nnz + 1
    r, c, v = lines[1].split(",")
    assert float(v) == K.P[K.state_index(int(r)), K.state_index(int(c))]
