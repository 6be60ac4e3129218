import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from exitdim.nets import NetIndex, build_dyadic_cubes, build_epsilon_net, build_voronoi_tiling, verify_cube_tree, verify_net
from exitdim.spaces import build_euclidean, build_path

from conftest import random_cloud


@given(st.integers(0, 10**6), st.floats(0.03, 0.4), st.integers(0, 50))
def test_net_is_separated_and_covering(seed, eps, net_seed):
    sp = random_cloud(seed, 80)
    net = build_epsilon_net(sp, eps, seed=net_seed)
    D = sp.distance_matrix()
    m = net.members
    sub = D[np.ix_(m, m)]
    # brute force oracle
    assert np.all(sub[~np.eye(m.size, dtype=bool)] >= eps)
    assert np.all(D[:, m].min(axis=1) < eps)
    assert verify_net(sp, net)["ok"]


def test_net_deterministic_under_seed():
    sp = random_cloud(1, 200)
    a = build_epsilon_net(sp, 0.1, seed=5)
    b = build_epsilon_net(sp, 0.1, seed=5)
    np.testing.assert_array_equal(a.members, b.members)
    assert np.all(np.diff(a.members) > 0)


def test_extend_from_keeps_members():
    sp = random_cloud(2, 200)
    coarse = build_epsilon_net(sp, 0.2, seed=0)
    fine = build_epsilon_net(sp, 0.1, seed=3, extend_from=NetIndex(0.1, coarse.members))
    assert np.isin(coarse.members, fine.members).all()
    assert verify_net(sp, fine)["ok"]


def test_extend_from_must_be_separated():
    sp = build_euclidean(1, 0.5, 0.01)
    with pytest.raises(ValueError):
        build_epsilon_net(sp, 0.1, extend_from=NetIndex(0.1, np.array([10, 11])))


def test_path_net_at_unit_scale():
    assert len(build_epsilon_net(build_path(10), 1.0)) == 11


def test_gasket_net_size(gasket6):
    net = build_epsilon_net(gasket6, 2.0**-4, seed=0)
    assert verify_net(gasket6, net)["ok"]
    assert len(net) == 58


def test_net_dict_round_trip():
    net = build_epsilon_net(random_cloud(3, 50), 0.2, seed=4)
    back = NetIndex.from_dict(net.to_dict())
    np.testing.assert_array_equal(back.members, net.members)
    assert back.epsilon == net.epsilon and back.seed == 4


@given(st.integers(0, 10**6))
def test_voronoi_tiling_partitions(seed):
    sp = random_cloud(seed, 100)
    net = build_epsilon_net(sp, 0.15, seed=seed % 7)
    tiling = build_voronoi_tiling(sp, net)
    tiles = tiling.tiles()
    flat = np.sort(np.concatenate(list(tiles.values())))
    np.testing.assert_array_equal(flat, np.arange(sp.n))
    # each member owns itself and every point sits within eps of its owner
    assert all(tiling.assignment[m] == m for m in net.members)
    d = np.linalg.norm(sp.points - sp.points[tiling.assignment], axis=1)
    assert d.max() < net.epsilon


def test_dyadic_cubes():
    sp = build_euclidean(1, 1.0, 0.005)
    tree = build_dyadic_cubes(sp, 0.3, 3, seed=0)
    res = verify_cube_tree(sp, tree)
    assert res["ok"], res
    for k in range(1, 3):
        assert np.isin(tree.nets[k - 1].members, tree.nets[k].members).all()
