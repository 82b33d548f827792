import numpy as np
import pytest
import scipy.linalg as sla

from lowinertia.case import GENERATOR, Branch, Bus, Generator, NetworkCase, reorder_buses
from lowinertia.errors import SingularNetworkError
from lowinertia.network import SusceptancePartition, build_susceptance, kron_reduce, reduce_case, relative_incidence

from support import chain3, random_case


def test_chain_susceptance_generator_first():
    part = build_susceptance(chain3())
    assert part.gen_index == (1, 3) and part.load_index == (2,)
    np.testing.assert_allclose(part.full(), [[10, 0, -10], [0, 10, -10], [-10, -10, 20]], atol=1e-12)
    # the same matrix in the order (1, 3, 2) written with bus 2 in the middle
    full = part.full()[np.ix_([0, 2, 1], [0, 2, 1])]
    np.testing.assert_allclose(full, [[10, -10, 0], [-10, 20, -10], [0, -10, 10]], atol=1e-12)


def _two_gen(branches):
    return NetworkCase((Bus(1, GENERATOR), Bus(2, GENERATOR)), branches,
                       (Generator(1, 100.0), Generator(2, 100.0)), ())


def test_single_branch_between_generators():
    net = reduce_case(_two_gen((Branch(1, 2, 0.2),)))
    np.testing.assert_allclose(net.B_r, [[5, -5], [-5, 5]])
    assert net.B_L.shape == (2, 0)


def test_parallel_branches_add():
    part = build_susceptance(_two_gen((Branch(1, 2, 0.1), Branch(1, 2, 0.1))))
    assert part.full()[0, 1] == pytest.approx(-20.0)


def test_chain_reduction_by_hand():
    net = reduce_case(chain3())
    np.testing.assert_allclose(net.B_r, [[5, -5], [-5, 5]], atol=1e-12)
    np.testing.assert_allclose(net.B_L, [[-0.5], [-0.5]], atol=1e-12)


def _block_elimination(case, dd_g, dp_l):
    """Oracle: solve the load rows of the full system for the load angles, then read generator rows."""
    B = build_susceptance(case).full()
    ng = len(case.gen_index)
    dd_l = np.linalg.solve(B[ng:, ng:], dp_l - B[ng:, :ng] @ dd_g)
    return B[:ng, :ng] @ dd_g + B[:ng, ng:] @ dd_l


def test_random_twenty_bus_exactness():
    rng = np.random.default_rng(20)
    case = random_case(rng, 20, 6)
    net = reduce_case(case)
    for _ in range(5):
        dd_g = rng.normal(size=6)
        dp_l = rng.normal(size=14)
        np.testing.assert_allclose(net.generator_power(dd_g, dp_l), _block_elimination(case, dd_g, dp_l), atol=1e-10)


@pytest.mark.parametrize("seed", range(100))
def test_random_network_invariants(seed):
    rng = np.random.default_rng(seed)
    case = random_case(rng, int(rng.integers(3, 31)))
    part = build_susceptance(case)
    full = part.full()
    np.testing.assert_allclose(full, full.T, atol=0)
    np.testing.assert_allclose(full.sum(axis=1), 0, atol=1e-10)
    net = kron_reduce(part)
    np.testing.assert_allclose(net.B_r, net.B_r.T, atol=1e-10)
    np.testing.assert_allclose(net.B_r.sum(axis=0), 0, atol=1e-10)
    np.testing.assert_allclose(net.B_r.sum(axis=1), 0, atol=1e-10)
    np.testing.assert_allclose(net.B_L.sum(axis=0), -1, atol=1e-10)
    n, m = net.B_L.shape
    dd_g, dp_l = rng.normal(size=n), rng.normal(size=m)
    dp_g = net.generator_power(dd_g, dp_l)
    np.testing.assert_allclose(dp_g, _block_elimination(case, dd_g, dp_l), atol=1e-10)
    assert dp_g.sum() == pytest.approx(-dp_l.sum(), abs=1e-10)
    # order independence
    perm = [int(b) for b in rng.permutation(case.bus_ids)]
    other = reduce_case(reorder_buses(case, perm))
    idx = [other.gen_index.index(b) for b in net.gen_index]
    np.testing.assert_allclose(other.B_r[np.ix_(idx, idx)], net.B_r, atol=1e-10)


def test_no_load_buses_is_identity():
    case = _two_gen((Branch(1, 2, 0.25),))
    part = build_susceptance(case)
    np.testing.assert_array_equal(kron_reduce(part).B_r, part.B_GG.toarray())


def test_sparse_path_matches_dense():
    from lowinertia.synthetic import synthetic_case
    case = synthetic_case(300, 40, seed=3)
    part = build_susceptance(case)
    net = kron_reduce(part)
    B = part.full()
    ng = 40
    ref = B[:ng, :ng] - B[:ng, ng:] @ sla.solve(B[ng:, ng:], B[ng:, :ng])
    np.testing.assert_allclose(net.B_r, ref, atol=1e-8)


def test_islanded_load_block_is_singular():
    import scipy.sparse as sp
    # one load bus with no connection at all
    z = sp.csr_matrix((1, 1))
    part = SusceptancePartition(sp.csr_matrix([[1.0, -1.0], [-1.0, 1.0]]), sp.csr_matrix((2, 1)),
                                sp.csr_matrix((1, 2)), z, (1, 2), (3,))
    with pytest.raises(SingularNetworkError):
        kron_reduce(part)


def test_relative_incidence():
    np.testing.assert_array_equal(relative_incidence(3), [[1, 0, -1], [0, 1, -1]])
    np.testing.assert_array_equal(relative_incidence(2), [[1, -1]])
    assert np.allclose(relative_incidence(5) @ np.full(5, 0.7), 0)
    with pytest.raises(ValueError):
        relative_incidence(1)
