from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lrfermion.dynamics import spectral_decompose
from lrfermion.lattice import LatticeSpec, geometry_constants
from lrfermion.operators import BlockOperator, MajoranaOperator, build_power_law_model, certify_alpha_decay, kitaev_chain, staggered_chain
from lrfermion.spectral import (
    Contour,
    GaplessError,
    NoBoundStateError,
    ResolventSingularError,
    bound_state,
    clustering_envelope,
    contour_projector,
    covariance,
    covariance_contour,
    default_contour,
    deformation_difference,
    green_blocks,
    reconstruct_sign_via_filter,
    resolvent,
    sign_error_bound,
    verify_clustering,
)

SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def _cache(matrix):
    m = np.atleast_2d(np.asarray(matrix, dtype=complex))
    return spectral_decompose(BlockOperator(m, LatticeSpec(1, len(m))))


def _random_gapped(n, seed, gap=0.3):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    eps = rng.uniform(gap, 2.0, n) * rng.choice([-1.0, 1.0], n)
    H = (q * eps) @ q.conj().T
    return (H + H.conj().T) / 2


# ---------------------------------------------------------------------------
# Green's function
# ---------------------------------------------------------------------------


def test_green_small_examples():
    # two decoupled sites, each H = 0.5 (the lattice needs L >= 2)
    c = _cache(np.diag([0.5, 0.5]))
    g = green_blocks(c, 0.0, np.array([[0, 0]]))
    assert g.block(0, 0)[0, 0] == pytest.approx(-2.0)
    assert g.delta_z == pytest.approx(0.5)
    c = _cache(np.diag([1.0, -1.0]))
    g = green_blocks(c, 0.0, np.array([[0, 0], [1, 1], [0, 1]]))
    assert g.block(0, 0)[0, 0] == pytest.approx(-1.0)
    assert g.block(1, 1)[0, 0] == pytest.approx(1.0)
    assert g.block(0, 1)[0, 0] == pytest.approx(0.0)


def test_midgap_green_norm_is_inverse_distance():
    H = staggered_chain(60, 1.0, 3.0, 1.0)
    c = spectral_decompose(H)
    G = resolvent(H.data, 0.0)
    assert np.linalg.norm(G, 2) == pytest.approx(1.0 / c.gap(), rel=1e-10)
    g = green_blocks(c, 0.0, np.array([[i, j] for i in range(60) for j in range(60)]))
    assert np.allclose(g.blocks.reshape(60, 60), G, atol=1e-10)


def test_resolvent_singular():
    c = _cache(np.diag([1.0, -1.0]))
    with pytest.raises(ResolventSingularError, match="resolvent singular"):
        green_blocks(c, 1.0)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), z1=st.complex_numbers(max_magnitude=3), z2=st.complex_numbers(max_magnitude=3))
def test_resolvent_identity(seed, z1, z2):
    H = _random_gapped(8, seed)
    eps = np.linalg.eigvalsh(H)
    if min(np.min(np.abs(eps - z1)), np.min(np.abs(eps - z2))) < 0.05:
        return
    G1, G2 = resolvent(H, z1), resolvent(H, z2)
    assert np.max(np.abs(G1 - G2 - (z2 - z1) * G1 @ G2)) <= 1e-9


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------


def test_covariance_examples():
    C = covariance(_cache(np.diag([1.0, -1.0]))).matrix
    assert np.allclose(C, np.diag([0.0, 1.0]), atol=1e-14)
    C = covariance(_cache(0.7 * SX)).matrix
    assert np.allclose(C, (np.eye(2) - SX) / 2, atol=1e-14)
    assert C[0, 1].real == pytest.approx(-0.5)


def test_majorana_two_mode():
    a = 2.0
    A = MajoranaOperator(np.array([[0.0, a], [-a, 0.0]]), LatticeSpec(1, 2))
    G = covariance(spectral_decompose(A)).matrix
    # i sgn(iA) for A = a J: iA has eigenvectors (1, +-i)/sqrt 2 with eigenvalues -+a
    assert np.allclose(G, [[0.0, -1.0], [1.0, 0.0]], atol=1e-14)
    assert np.allclose(G, -G.T) and np.allclose(G @ G, -np.eye(2))


def test_gapless_rejected():
    with pytest.raises(GaplessError, match="Fermi level inside band"):
        covariance(_cache(np.diag([0.0, 1.0])))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 20))
def test_projector_and_trace(seed, n):
    H = _random_gapped(n, seed)
    cov = covariance(_cache(H))
    assert cov.projector_residual() <= 1e-10
    assert np.trace(cov.matrix).real == pytest.approx(np.sum(np.linalg.eigvalsh(H) < 0), abs=1e-10)


# ---------------------------------------------------------------------------
# contour integrals
# ---------------------------------------------------------------------------


def test_contour_examples():
    H = np.diag([1.0, -1.0])
    P = contour_projector(H, np.array([-1.0, 1.0]), Contour(-1.0, 0.5, 64))
    assert np.allclose(P, np.diag([0.0, 1.0]), atol=1e-10)
    P = contour_projector(H, np.array([-1.0, 1.0]), Contour(5.0, 0.5, 64))
    assert np.allclose(P, 0.0, atol=1e-14)
    with pytest.raises(ValueError, match="intersects"):
        contour_projector(H, np.array([-1.0, 1.0]), Contour(-0.5, 0.5, 64))


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 16), gap=st.floats(0.1, 1.0))
def test_contour_matches_spectral_covariance(seed, n, gap):
    c = _cache(_random_gapped(n, seed, gap))
    contour = default_contour(c.eigenvalues)
    assert contour.nodes >= 64
    diff = covariance_contour(c, contour).matrix - covariance(c).matrix
    assert np.linalg.norm(diff, 2) <= 1e-8


def test_two_site_contour():
    c = _cache(0.4 * SX)
    assert np.linalg.norm(covariance_contour(c).matrix - covariance(c).matrix, 2) <= 1e-8


@pytest.mark.parametrize("seed", range(3))
def test_majorana_contour_matches_sign(seed):
    rng = np.random.default_rng(seed)
    A = kitaev_chain(8, 1.0, float(rng.uniform(0.2, 1.0)), float(rng.uniform(0.1, 0.8)), 2.5)
    c = spectral_decompose(A)
    diff = covariance_contour(c).matrix - covariance(c).matrix
    assert np.linalg.norm(diff, 2) <= 1e-8


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12))
def test_deformation_identity(seed, n):
    Ha = _random_gapped(n, seed)
    Hb = Ha + 0.05 * _random_gapped(n, seed + 1)
    if np.min(np.abs(np.linalg.eigvalsh(Hb))) < 0.1:
        return
    Ca, Cb = covariance(_cache(Ha)).matrix, covariance(_cache(Hb)).matrix
    assert np.linalg.norm(deformation_difference(Ha, Hb) - (Cb - Ca), 2) <= 1e-8


# ---------------------------------------------------------------------------
# sign reconstruction
# ---------------------------------------------------------------------------


def test_sign_reconstruction_examples():
    c = _cache(np.diag([1.0, -1.0]))
    rec = reconstruct_sign_via_filter(c, 0.2)
    assert rec.passed and rec.error <= 1e-8 + 1e-12
    rec = reconstruct_sign_via_filter(c, 1.0)
    assert rec.bound == pytest.approx(1 / math.sqrt(math.pi) * math.exp(-1) + 1e-8, rel=1e-9)
    assert rec.bound == pytest.approx(0.208, abs=1e-3)
    assert rec.passed
    c = _cache(0.5 * SX)
    rec = reconstruct_sign_via_filter(c, 0.1)
    assert np.linalg.norm(rec.matrix - SX, 2) <= 1e-6


def test_sign_reconstruction_gapless_rejected():
    with pytest.raises(GaplessError):
        reconstruct_sign_via_filter(_cache(np.diag([0.0, 1.0])), 0.5)


def test_sign_error_bound_formula():
    assert sign_error_bound(0.5, 1.0) == pytest.approx(0.5 / math.sqrt(math.pi) * math.exp(-4))


# ---------------------------------------------------------------------------
# clustering envelopes
# ---------------------------------------------------------------------------


def _chain_constants(L=200):
    H = staggered_chain(L, 1.0, 3.0, 1.0)
    return H, geometry_constants(H.spec, 3.0, certify_alpha_decay(H, 3.0).J)


def test_envelope_decreases_and_validates():
    _, c = _chain_constants(20)
    for target in ("covariance", "green"):
        env = clustering_envelope(target, c, 0.9)
        # the poly-log prefactor only loses to (D+1)^-alpha at very large D
        vals = env(np.geomspace(1e7, 1e60, 30))
        assert np.all(np.diff(vals) < 0)
    with pytest.raises(ValueError, match="diverge"):
        clustering_envelope("green", c, 0.0)


def test_clustering_small_chain():
    H, c = _chain_constants(240)
    cache = spectral_decompose(H)
    pairs = np.column_stack([np.full(240, 120), np.arange(240)])
    cov = verify_clustering(covariance(cache), clustering_envelope("covariance", c, cache.gap()), pairs, (12, 60))
    assert cov.passed
    assert cov.fit.slope == pytest.approx(-3.0, abs=0.3)
    green = green_blocks(cache, 0.0, pairs)
    rep = verify_clustering(green, clustering_envelope("green", c, green.delta_z), window=(12, 60))
    assert rep.passed and rep.fit.slope <= -2.7


# ---------------------------------------------------------------------------
# bound states
# ---------------------------------------------------------------------------


def test_bound_state_small_chain():
    spec = LatticeSpec(1, 400, "periodic")
    H0 = build_power_law_model(spec, 1.0, 3.0)
    H = build_power_law_model(spec, 1.0, 3.0, impurities=[(0, 3.0)])
    bs = bound_state(H, spectral_decompose(H0), window=(10, 100))
    assert bs.energy > bs.band[1]
    assert bs.residual <= 1e-8
    assert bs.fit.slope == pytest.approx(-3.0, abs=0.25)
    assert bs.impurity_sites == (0,)


def test_no_bound_state_without_impurity():
    spec = LatticeSpec(1, 50, "periodic")
    H0 = build_power_law_model(spec, 1.0, 3.0)
    with pytest.raises(NoBoundStateError, match="no bound state"):
        bound_state(H0, spectral_decompose(H0))
