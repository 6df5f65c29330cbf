from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrfermion.lattice import LatticeSpec, coarse_grain, geometry_constants
from lrfermion.operators import (
    BlockOperator,
    MajoranaOperator,
    build_majorana,
    build_power_law_model,
    certify_alpha_decay,
    check_coarse_block_bound,
    damp_exponential,
    gap_safe_kappa,
    holder_bound,
    kitaev_chain,
    nearest_neighbor_chain,
    random_power_law_model,
    split_range,
    staggered_chain,
)

specs = st.builds(
    LatticeSpec,
    d=st.integers(1, 2),
    L=st.integers(2, 7),
    boundary=st.sampled_from(["open", "periodic", "antiperiodic"]),
    internal_dim=st.integers(1, 2),
)


def _rng(seed):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


def test_power_law_block_examples():
    H = build_power_law_model(LatticeSpec(1, 2), 1.0, 2.0)
    assert H.block(0, 1)[0, 0] == pytest.approx(0.25)
    H = build_power_law_model(LatticeSpec(1, 4, "periodic"), 1.0, 2.0)
    assert H.block(0, 1)[0, 0] == pytest.approx(1 / 4 + 1 / 16)
    H = build_power_law_model(LatticeSpec(1, 4), 1.0, 2.0, impurities=[(0, 3.0)])
    assert H.block(0, 0)[0, 0] == pytest.approx(3.0)


def test_antiperiodic_images_carry_sign():
    H = build_power_law_model(LatticeSpec(1, 4, "antiperiodic"), 1.0, 2.0)
    assert H.block(0, 1)[0, 0].real == pytest.approx(1 / 4 - 1 / 16)


def test_non_hermitian_coupling_rejected():
    with pytest.raises(ValueError, match="Hermitian"):
        build_power_law_model(LatticeSpec(1, 3, internal_dim=2), 1.0, 2.0, internal_coupling=[[0, 1], [0, 0]])
    with pytest.raises(ValueError):
        BlockOperator(np.array([[0, 1], [0, 0]]), LatticeSpec(1, 2))


@settings(max_examples=30, deadline=None)
@given(spec=specs, alpha=st.floats(0.5, 5.0), seed=st.integers(0, 1000))
def test_models_are_hermitian(spec, alpha, seed):
    H = random_power_law_model(spec, 1.0, alpha, _rng(seed))
    assert np.array_equal(H.data, H.data.conj().T) or np.allclose(H.data, H.data.conj().T, atol=1e-14)
    coupling = np.array([[1.0, 0.5j], [-0.5j, 0.2]])[: spec.internal_dim, : spec.internal_dim]
    G = build_power_law_model(spec, 1.0, alpha, internal_coupling=coupling)
    assert np.allclose(G.data, G.data.conj().T, atol=1e-14)


# ---------------------------------------------------------------------------
# certification and splitting
# ---------------------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(d=st.integers(1, 3), L=st.integers(2, 6), alpha=st.floats(0.5, 5.0), J=st.floats(0.1, 3.0))
def test_certificate_is_exact_under_open_boundaries(d, L, alpha, J):
    H = build_power_law_model(LatticeSpec(d, L), J, alpha)
    assert certify_alpha_decay(H, alpha).J == pytest.approx(J, rel=1e-12)


def test_certificate_grows_with_L_at_larger_alpha():
    Js = [certify_alpha_decay(build_power_law_model(LatticeSpec(1, L), 1.0, 2.0), 3.0).J for L in (10, 20, 40)]
    assert Js == pytest.approx([10.0, 20.0, 40.0])


def test_row_sum_bound():
    H = build_power_law_model(LatticeSpec(1, 201), 1.0, 2.0)
    cert = certify_alpha_decay(H, 2.0)
    assert cert.row_sum_bound <= 2 * (np.pi**2 / 6) - 1  # r = 0 value of the tail constant


def test_kitaev_and_zero_majorana_certificates():
    A = kitaev_chain(30, 1.0, 0.7, 0.5, 2.5)
    assert 0 < certify_alpha_decay(A, 2.5).J < np.inf
    Z = MajoranaOperator(np.zeros((4, 4)), LatticeSpec(1, 4))
    assert certify_alpha_decay(Z, 2.0).J == 0.0


def test_split_examples():
    nn = nearest_neighbor_chain(8)
    assert not np.any(split_range(nn, 1).long_range.data)
    H = build_power_law_model(LatticeSpec(1, 8), 1.0, 2.0)
    assert not np.any(split_range(H, 8).long_range.data)
    s = split_range(H, 2)
    assert abs(s.long_range.block(0, 3)[0, 0]) == pytest.approx(1 / 16)
    assert not np.any(s.long_range.block(0, 2))


@settings(max_examples=30, deadline=None)
@given(spec=specs, chi=st.integers(1, 6), seed=st.integers(0, 1000))
def test_split_is_exact(spec, chi, seed):
    H = random_power_law_model(spec, 1.0, 2.0, _rng(seed))
    s = split_range(H, chi)
    assert np.array_equal(s.short_range.data + s.long_range.data, H.data)
    assert not np.any((s.short_range.data != 0) & (s.long_range.data != 0))


def test_coarse_block_bound_examples():
    nn = nearest_neighbor_chain(16)
    grain = coarse_grain(nn.spec, 2)
    c = geometry_constants(nn.spec, 2.5, 1.0, grain)
    assert check_coarse_block_bound(split_range(nn, 2), grain, c).worst_ratio == 0.0

    spec = LatticeSpec(1, 64)
    H = random_power_law_model(spec, 1.0, 2.5, _rng(0))
    J = certify_alpha_decay(H, 2.5).J
    for chi in (4, 8):
        grain = coarse_grain(spec, chi)
        rep = check_coarse_block_bound(split_range(H, chi), grain, geometry_constants(spec, 2.5, J, grain))
        assert rep.passed and not rep.violations
    assert (8 / 4) ** -1.5 == pytest.approx(0.354, abs=1e-3)


# ---------------------------------------------------------------------------
# exponential damping
# ---------------------------------------------------------------------------


def test_damping_zero_is_identity_and_negative_rejected():
    H = staggered_chain(10, 1.0, 2.0, 0.5)
    assert damp_exponential(H, 0.0) is H
    with pytest.raises(ValueError):
        damp_exponential(H, -0.1)


def test_gap_safe_kappa_frozen():
    c = geometry_constants(LatticeSpec(1, 10), 2.0, 1.0)
    # (0.5 / (2 c1))^2 with c1 = 4 (zeta(2) - 1)
    assert gap_safe_kappa(0.5, c) == pytest.approx(0.009393, rel=1e-3)
    kappa = gap_safe_kappa(0.5, c)
    assert holder_bound(0.0, kappa, c) == pytest.approx(0.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), ka=st.floats(0.0, 3.0), kb=st.floats(0.0, 3.0))
def test_holder_bound(seed, ka, kb):
    spec = LatticeSpec(1, 40)
    H = random_power_law_model(spec, 1.0, 2.5, _rng(seed))
    c = geometry_constants(spec, 2.5, certify_alpha_decay(H, 2.5).J)
    diff = np.linalg.norm(damp_exponential(H, ka).data - damp_exponential(H, kb).data, 2)
    assert diff <= holder_bound(ka, kb, c) * (1 + 1e-12) + 1e-15
    if ka == kb:
        assert holder_bound(ka, kb, c) == 0.0


# ---------------------------------------------------------------------------
# Majorana form
# ---------------------------------------------------------------------------


def test_single_majorana_bond():
    A = build_majorana(LatticeSpec(1, 2), 1.0, 2.0)
    assert A.data[0, 1] == pytest.approx(0.25)
    assert A.data[1, 0] == pytest.approx(-0.25)


def test_antisymmetry_violation_rejected():
    with pytest.raises(ValueError, match="antisymmetry"):
        MajoranaOperator(np.array([[0.0, 1.0], [1.0, 0.0]]), LatticeSpec(1, 2))
    with pytest.raises(ValueError, match="antisymmetry"):
        build_majorana(LatticeSpec(1, 3, internal_dim=2), 1.0, 2.0, onsite=np.eye(2))


@settings(max_examples=25, deadline=None)
@given(L=st.integers(2, 20), hop=st.floats(-2, 2), pair=st.floats(-2, 2), mu=st.floats(-2, 2), alpha=st.floats(1.0, 4.0))
def test_majorana_spectrum_is_symmetric(L, hop, pair, mu, alpha):
    A = kitaev_chain(L, hop, pair, mu, alpha)
    eps = np.linalg.eigvalsh(A.hermitian())
    assert np.allclose(np.sort(eps), np.sort(-eps), atol=1e-12)
