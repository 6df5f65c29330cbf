from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from lrfermion.lattice import (
    DenseCapError,
    LatticeSpec,
    UnboundedRegimeError,
    aligned_offset,
    build_lattice,
    c1_closed_form_1d,
    check_lattice_sum_bounds,
    coarse_grain,
    derive_constants,
    distance_matrix,
    geometry_constants,
    lattice_sum_constants,
)


def _c1_oracle_1d(alpha: float, rmax: int = 20000) -> float:
    """sup_r (r+1)^(alpha-1) sum_{|n|>=r} (|n|+1)^-alpha via Hurwitz zeta."""
    r = np.arange(1, rmax)
    scan = 2.0 * (r + 1.0) ** (alpha - 1.0) * special.zeta(alpha, r + 1.0)
    return max(2.0 * special.zeta(alpha) - 1.0, float(scan.max()), 2.0 / (alpha - 1.0))


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def test_distance_examples():
    assert LatticeSpec(1, 5).distance(0, 4) == 4.0
    spec = LatticeSpec(2, 4, "periodic")
    assert spec.distance(spec.index((0, 0)), spec.index((3, 0))) == 1.0
    assert LatticeSpec(3, 2).n_sites == 8


def test_distance_matrix_is_symmetric_with_zero_diagonal():
    for spec in (LatticeSpec(2, 5, "open"), LatticeSpec(2, 5, "antiperiodic"), LatticeSpec(3, 3, "periodic")):
        D = distance_matrix(spec)
        assert np.array_equal(D, D.T)
        assert np.all(np.diag(D) == 0)


def test_dense_cap_rejects_large_lattices():
    with pytest.raises(DenseCapError):
        build_lattice(LatticeSpec(2, 101), dense_cap=10_000)
    assert build_lattice(LatticeSpec(1, 10)).distance(0, 9) == 9.0


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        LatticeSpec(4, 3)
    with pytest.raises(ValueError):
        LatticeSpec(1, 3, "twisted")


# ---------------------------------------------------------------------------
# coarse graining
# ---------------------------------------------------------------------------


def test_coarse_grain_examples():
    g = coarse_grain(LatticeSpec(1, 6), 2)
    assert [len(c) for c in g.cells] == [2, 2, 2]
    g = coarse_grain(LatticeSpec(2, 4), 2)
    assert [len(c) for c in g.cells] == [4, 4, 4, 4]
    g = coarse_grain(LatticeSpec(1, 5), 2)
    assert [len(c) for c in g.cells] == [2, 2, 1]
    assert g.partial == frozenset({2})


def test_chi_larger_than_lattice_is_degenerate():
    g = coarse_grain(LatticeSpec(1, 4), 10)
    assert g.degenerate and g.n_cells == 1


@settings(max_examples=40, deadline=None)
@given(
    d=st.integers(1, 3),
    L=st.integers(2, 9),
    chi=st.integers(1, 5),
    boundary=st.sampled_from(["open", "periodic"]),
    data=st.data(),
)
def test_cells_partition_and_Rr_inequality(d, L, chi, boundary, data):
    spec = LatticeSpec(d, L, boundary)
    offset = data.draw(st.lists(st.integers(0, chi - 1), min_size=d, max_size=d))
    g = coarse_grain(spec, chi, offset)
    flat = np.sort(np.concatenate(g.cells))
    assert np.array_equal(flat, np.arange(spec.n_sites))
    # chi (|R - R'| - R0) <= |r - r'| for every fine pair
    R0 = g.R0()
    D = distance_matrix(spec)
    C = g.coarse_distances()[np.ix_(g.cell_of, g.cell_of)]
    assert np.all(chi * (C - R0) <= D + 1e-9)


@settings(max_examples=40, deadline=None)
@given(L=st.integers(3, 12), chi=st.integers(1, 4), data=st.data())
def test_aligned_offset_gives_chi_R_at_least_r(L, chi, data):
    spec = LatticeSpec(2, L)
    r = data.draw(st.tuples(st.integers(0, L - 1), st.integers(0, L - 1)))
    rp = data.draw(st.tuples(st.integers(0, L - 1), st.integers(0, L - 1)))
    g = coarse_grain(spec, chi, aligned_offset(spec, chi, r, rp))
    a, b = g.cell_of[spec.index(r)], g.cell_of[spec.index(rp)]
    assert chi * g.coarse_distance(a, b) >= spec.distance(spec.index(r), spec.index(rp)) - 1e-9


# ---------------------------------------------------------------------------
# lattice-sum constants
# ---------------------------------------------------------------------------


def test_b_in_one_dimension_is_two():
    b, _ = lattice_sum_constants(1, 2.0)
    assert b == pytest.approx(2.0, abs=1e-12)


def test_c1_one_dimension_alpha_two_frozen():
    # sup over r is attained at r = 1: 2 * 2 (zeta(2) - 1)
    _, c1 = lattice_sum_constants(1, 2.0)
    assert c1 == pytest.approx(4.0 * (math.pi**2 / 6 - 1.0), rel=1e-9)
    assert c1 == pytest.approx(2.5797, abs=1e-4)
    # the r = 0 value alone is smaller
    assert c1_closed_form_1d(2.0) == pytest.approx(math.pi**2 / 3 - 1.0, rel=1e-12)
    assert c1 > c1_closed_form_1d(2.0)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(1.2, 6.0))
def test_c1_matches_hurwitz_zeta_oracle(alpha):
    _, c1 = lattice_sum_constants(1, alpha)
    assert c1 == pytest.approx(_c1_oracle_1d(alpha), rel=1e-6)


@pytest.mark.parametrize("d, alpha, c1", [(2, 3.0, 2 * math.pi), (3, 4.0, 4 * math.pi)])
def test_c1_higher_dimensions_frozen(d, alpha, c1):
    assert lattice_sum_constants(d, alpha)[1] == pytest.approx(c1, rel=1e-9)


@pytest.mark.parametrize("d, alpha", [(1, 2.5), (2, 3.5), (3, 4.5)])
def test_constants_satisfy_defining_inequalities(d, alpha):
    b, c1 = lattice_sum_constants(d, alpha)
    R = {1: 400, 2: 40, 3: 14}[d]
    axis = np.arange(-R, R + 1)
    grid = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
    norms = np.sqrt((grid**2).sum(axis=1))
    for r in np.linspace(0, R / 2, 25):
        assert np.sum(norms <= r) <= b * (r + 1) ** d * (1 + 1e-12)
        # finite box sum is a lower bound on the full tail sum
        tail = np.sum((norms[norms >= r] + 1.0) ** -alpha)
        assert tail <= c1 * (r + 1.0) ** (d - alpha) * (1 + 1e-12)


def test_unbounded_regime():
    with pytest.raises(UnboundedRegimeError, match="unbounded regime"):
        lattice_sum_constants(2, 2.0)


def test_derived_constants():
    b, c1 = lattice_sum_constants(1, 2.0)
    c = derive_constants(1, 2.0, 1.0, b, c1, 1.0)
    assert c.v == pytest.approx(math.e * c1)
    assert c.c2 == pytest.approx(2**3 * (b + c1))
    assert c.C2 == pytest.approx(math.e)
    assert c.t_c == pytest.approx((2.0 - 1.0 - 1.0) / c.v)
    assert geometry_constants(LatticeSpec(2, 4), 3.0, 1.0).R0 == pytest.approx(math.sqrt(2))


# ---------------------------------------------------------------------------
# lattice-sum inequalities
# ---------------------------------------------------------------------------


def test_convolution_equal_cells_is_trivial_branch():
    spec = LatticeSpec(1, 401)
    c = geometry_constants(spec, 2.5, 1.0)
    rep = check_lattice_sum_bounds(spec, 2.5, c, "convolution", samples=[(200, 200, 1.6), (200, 200, 5.0)])
    assert rep.passed and rep.worst_ratio <= 1.0


def test_convolution_example():
    spec = LatticeSpec(1, 1001)
    c = geometry_constants(spec, 2.5, 1.0)
    rep = check_lattice_sum_bounds(spec, 2.5, c, "convolution", samples=[(480, 520, 3.0)])
    assert rep.worst_ratio <= 1.0


def test_reproducibility_theta_zero():
    spec = LatticeSpec(1, 301)
    c = geometry_constants(spec, 2.0, 1.0)
    rng = np.random.default_rng(3)
    samples = [(int(a), int(b), 0.0) for a, b in rng.integers(301, size=(1000, 2))]
    assert check_lattice_sum_bounds(spec, 2.0, c, "reproducibility", samples=samples).passed


def test_convolution_rejects_small_xi():
    spec = LatticeSpec(1, 50)
    c = geometry_constants(spec, 2.5, 1.0)
    with pytest.raises(ValueError):
        check_lattice_sum_bounds(spec, 2.5, c, "convolution", samples=[(0, 1, 1.0)])


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31), alpha=st.floats(2.1, 4.0))
def test_random_lattice_sum_checks_pass(seed, alpha):
    spec = LatticeSpec(2, 21)
    c = geometry_constants(spec, alpha, 1.0)
    for mode in ("convolution", "reproducibility"):
        assert check_lattice_sum_bounds(spec, alpha, c, mode, trials=30, seed=seed).passed
