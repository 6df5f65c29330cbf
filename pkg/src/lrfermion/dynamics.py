"""Single-particle time evolution and Lieb-Robinson envelopes.

Every f(H) in the package goes through a ``SpectralCache``: the Hermitian
matrix H (or iA for a Majorana generator A) is diagonalized once and
e^{-iHt}, sgn H and resolvents are assembled from the eigenpairs.  For a
Majorana generator, e^{-i(iA)t} = e^{At}.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._parallel import parallel_map
from .lattice import DEFAULT_DENSE_CAP, CoarseGraining, GeometryConstants, LatticeSpec, geometry_constants
from .operators import (
    BlockOperator,
    BoundReport,
    DecayCertificate,
    MajoranaOperator,
    SplitOperator,
    block_norm_table,
    coarse_block_norms,
)

EVOLUTION_CAP = 4000
ENVELOPE_KINDS = ("theorem1", "hastings_koma", "combined")


class EnvelopeDomainError(ValueError):
    """Raised when an envelope is requested outside its range of validity."""


@dataclass(frozen=True, eq=False)
class SpectralCache:
    """Eigen-decomposition M = U diag(eps) U^dagger of a Hermitian matrix M.

    ``majorana`` records that M = iA for a real antisymmetric A.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_hash: str
    spec: LatticeSpec
    majorana: bool = False
    matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def apply(self, values: np.ndarray) -> np.ndarray:
        """U diag(values) U^dagger."""
        U = self.eigenvectors
        return (U * values) @ U.conj().T

    def function(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return self.apply(f(self.eigenvalues))

    def evolution(self, t: float) -> np.ndarray:
        """e^{-iMt}; real (e^{At}) for a Majorana cache."""
        out = self.apply(np.exp(-1j * self.eigenvalues * t))
        return out.real if self.majorana else out

    def rows(self, sites: Sequence[int], values: np.ndarray) -> np.ndarray:
        """Rows of U diag(values) U^dagger belonging to ``sites``, shape (len(sites)*k, dim)."""
        k = self.spec.internal_dim
        idx = (np.asarray(sites)[:, None] * k + np.arange(k)).reshape(-1)
        return (self.eigenvectors[idx] * values) @ self.eigenvectors.conj().T

    def gap(self) -> float:
        """min |eigenvalue| (Fermi energy at zero)."""
        return float(np.min(np.abs(self.eigenvalues)))

    def reconstruction_residual(self) -> float:
        if self.matrix is None:
            raise ValueError("cache was built without keeping the source matrix")
        scale = max(np.linalg.norm(self.matrix, 2), 1e-300)
        return float(np.linalg.norm(self.apply(self.eigenvalues.astype(complex)) - self.matrix, 2) / scale)

    def orthonormality_residual(self) -> float:
        U = self.eigenvectors
        return float(np.linalg.norm(U.conj().T @ U - np.eye(self.dim), 2))


def _hash(matrix: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(matrix).tobytes()).hexdigest()[:16]


def hermitian_eigh(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """eigh, dropping to the real symmetric solver when M has no imaginary part."""
    if np.iscomplexobj(M) and not np.any(M.imag):
        M = M.real
    return np.linalg.eigh(M)


def spectral_decompose(
    op: BlockOperator | MajoranaOperator, dense_cap: int = DEFAULT_DENSE_CAP, keep_matrix: bool = True
) -> SpectralCache:
    """Diagonalize H, or iA for a Majorana generator."""
    op.spec.check_dense(dense_cap)
    majorana = isinstance(op, MajoranaOperator)
    M = op.hermitian() if majorana else op.data
    try:
        eps, U = hermitian_eigh(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
    return SpectralCache(
        eigenvalues=eps,
        eigenvectors=U,
        source_hash=_hash(op.data),
        spec=op.spec,
        majorana=majorana,
        matrix=M if keep_matrix else None,
    )


# ---------------------------------------------------------------------------
# propagator norms
# ---------------------------------------------------------------------------


def reference_pairs(spec: LatticeSpec, reference: int = 0) -> np.ndarray:
    """One reference site against every site, shape (n_sites, 2)."""
    ref = spec.index(reference)
    return np.column_stack([np.full(spec.n_sites, ref), np.arange(spec.n_sites)])


def all_pairs(spec: LatticeSpec) -> np.ndarray:
    n = spec.n_sites
    r, c = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.column_stack([r.ravel(), c.ravel()])


@dataclass(frozen=True, eq=False)
class PropagatorTable:
    """||P_r e^{-iHt} P_r'|| for the listed (r, r') site pairs at time t."""

    t: float
    pairs: np.ndarray
    distances: np.ndarray
    norms: np.ndarray

    def matrix(self, n_sites: int) -> np.ndarray:
        out = np.full((n_sites, n_sites), np.nan)
        out[self.pairs[:, 0], self.pairs[:, 1]] = self.norms
        return out


def block_norms_of_rows(rows: np.ndarray, sites: Sequence[int], n_sites: int, k: int) -> np.ndarray:
    """Block norms of row blocks ``rows`` (len(sites)*k x n_sites*k), shape (len(sites), n_sites)."""
    m = len(sites)
    if k == 1:
        return np.abs(rows)
    blocks = rows.reshape(m, k, n_sites, k).transpose(0, 2, 1, 3)
    return np.linalg.svd(blocks, compute_uv=False)[..., 0]


def propagator_block_norms(cache: SpectralCache, t: float, pairs: np.ndarray | None = None) -> PropagatorTable:
    """Block norms of e^{-iHt} (e^{At} for Majorana caches) for ``pairs``."""
    spec = cache.spec
    spec.check_dense(EVOLUTION_CAP)
    pairs = reference_pairs(spec) if pairs is None else np.asarray(pairs, dtype=int).reshape(-1, 2)
    k = spec.internal_dim
    phase = np.exp(-1j * cache.eigenvalues * t)
    row_sites = np.unique(pairs[:, 0])
    if len(row_sites) == spec.n_sites:
        table = block_norm_table(cache.evolution(t), spec.n_sites, k)
    else:
        rows = cache.rows(row_sites, phase)
        if cache.majorana:
            rows = rows.real
        table = np.zeros((spec.n_sites, spec.n_sites))
        table[row_sites] = block_norms_of_rows(rows, row_sites, spec.n_sites, k)
    norms = table[pairs[:, 0], pairs[:, 1]]
    dist = _pair_distances(spec, pairs)
    return PropagatorTable(t=float(t), pairs=pairs, distances=dist, norms=norms)


def _pair_distances(spec: LatticeSpec, pairs: np.ndarray) -> np.ndarray:
    sites = spec.sites()
    delta = spec.displacement(sites[pairs[:, 0]], sites[pairs[:, 1]]).astype(float)
    return np.sqrt((delta**2).sum(axis=1))


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LREnvelopeParams:
    """Theorem-1 envelope constants.

    ``ceil_chi`` replaces chi_t + 1 inside K(t) by ceil(chi_t) + 1, the cutoff
    actually realizable on a lattice; both are valid upper bounds.
    """

    constants: GeometryConstants
    ceil_chi: bool = False

    @property
    def alpha(self) -> float:
        return self.constants.alpha

    @property
    def d(self) -> int:
        return self.constants.d

    @property
    def J(self) -> float:
        return self.constants.J

    @property
    def t_c(self) -> float:
        return self.constants.t_c

    def _front(self, t):
        c = self.constants
        return c.v * np.abs(t) + c.R0 + 1.0

    def chi_t(self, t):
        c = self.constants
        t = np.abs(t)
        return (c.c1 * c.c2 * c.C1 * 4.0**c.d * self._front(t) ** c.d * t) ** (1.0 / (c.alpha - c.d))

    def K(self, t):
        chi = self.chi_t(t)
        if self.ceil_chi:
            chi = np.ceil(chi)
        return math.e * (4.0 * (chi + 1.0) * self._front(t)) ** self.alpha

    def asymptotic_doubling_ratio(self) -> float:
        """lim K(2T)/K(T) = 2^(alpha (alpha+1) / (alpha-d))."""
        return 2.0 ** (self.alpha * (self.alpha + 1.0) / (self.alpha - self.d))


def envelope_params(constants: GeometryConstants, ceil_chi: bool = False) -> LREnvelopeParams:
    if constants.alpha <= constants.d:
        raise EnvelopeDomainError("Lieb-Robinson envelope needs alpha > d")
    return LREnvelopeParams(constants=constants, ceil_chi=ceil_chi)


def hastings_koma(constants: GeometryConstants, t, D, strict_lemma: bool = False):
    """delta_{D,0} + (e^{c2 J |t|} - 1) / (c2 (D+1)^alpha).

    ``strict_lemma=True`` drops the 1/c2 prefactor.
    """
    D = np.asarray(D, dtype=float)
    with np.errstate(over="ignore"):
        growth = np.expm1(constants.lambda_hk * np.abs(t))
    if not strict_lemma:
        growth = growth / constants.c2
    return np.where(D == 0, 1.0, 0.0) + growth / (D + 1.0) ** constants.alpha


def lr_envelope(params: LREnvelopeParams, t: float, D, kind: str = "combined", strict_lemma: bool = False):
    """Upper bound on ||P_r e^{-iHt} P_r'|| at separation D (scalar or array)."""
    if kind not in ENVELOPE_KINDS:
        raise ValueError(f"unknown envelope kind {kind!r}")
    D = np.asarray(D, dtype=float)
    c = params.constants
    at = abs(t)
    if kind == "theorem1":
        if at <= c.t_c:
            raise EnvelopeDomainError(f"envelope undefined below t_c: |t|={at} <= t_c={c.t_c}")
        return params.K(at) / (D + 1.0) ** c.alpha
    if kind == "hastings_koma":
        return hastings_koma(c, at, D, strict_lemma)
    bound = np.minimum(hastings_koma(c, at, D, strict_lemma), 1.0)
    if at > max(c.t_c, 0.0):
        bound = np.minimum(bound, params.K(at) / (D + 1.0) ** c.alpha)
    return bound


def two_term_envelope(params: LREnvelopeParams, t: float, D):
    """e^{vt - D/(chi_t+1)} + (1 - 1/e) K(t)/(D+1)^alpha, for comparison only."""
    D = np.asarray(D, dtype=float)
    c = params.constants
    at = abs(t)
    if at <= c.t_c:
        raise EnvelopeDomainError(f"envelope undefined below t_c: |t|={at} <= t_c={c.t_c}")
    chi = params.chi_t(at)
    return np.exp(c.v * at - D / (chi + 1.0)) + (1.0 - math.exp(-1.0)) * params.K(at) / (D + 1.0) ** c.alpha


# ---------------------------------------------------------------------------
# verification
# ---------------------------------------------------------------------------

LR_CSV_HEADER = ("t", "distance", "measured_norm", "envelope", "ratio")


@dataclass
class LRReport:
    """Measured propagator norms against the combined envelope."""

    t: np.ndarray
    distance: np.ndarray
    measured: np.ndarray
    envelope: np.ndarray
    pairs: np.ndarray
    tol: float = 1e-12

    @property
    def ratio(self) -> np.ndarray:
        return self.measured / self.envelope

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratio)) if len(self.ratio) else 0.0

    @property
    def violations(self) -> list[tuple[float, int, int]]:
        bad = np.nonzero(self.ratio > 1.0 + self.tol)[0]
        return [(float(self.t[i]), int(self.pairs[i, 0]), int(self.pairs[i, 1])) for i in bad]

    @property
    def passed(self) -> bool:
        return not self.violations

    def rows(self):
        for row in zip(self.t, self.distance, self.measured, self.envelope, self.ratio):
            yield tuple(float(x) for x in row)

    def max_by_distance(self) -> list[tuple[float, float, float, float, float]]:
        """One row per (t, distance) holding the largest measured norm at that distance.

        The envelope depends on the pair only through the distance, so the row
        ratio is the worst ratio over all pairs at that separation.
        """
        key = np.round(self.distance, 9)
        order = np.lexsort((self.measured, key, self.t))
        t, k = self.t[order], key[order]
        # last entry of each (t, distance) run holds the largest measured norm
        last = np.ones(len(order), dtype=bool)
        last[:-1] = (t[1:] != t[:-1]) | (k[1:] != k[:-1])
        i = order[last]
        return [
            (float(a), float(b), float(c), float(d), float(e))
            for a, b, c, d, e in zip(self.t[i], self.distance[i], self.measured[i], self.envelope[i], self.ratio[i])
        ]

    def to_csv(self, path: str | Path, aggregate: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LR_CSV_HEADER)
            for row in self.max_by_distance() if aggregate else self.rows():
                w.writerow([repr(x) for x in row])


def verify_lr_bound(
    H: BlockOperator | MajoranaOperator,
    certificate: DecayCertificate,
    times: Sequence[float],
    pairs: np.ndarray | None = None,
    cache: SpectralCache | None = None,
    constants: GeometryConstants | None = None,
    threads: int = 1,
    strict_lemma: bool = False,
) -> LRReport:
    """Check ||P_r e^{-iHt} P_r'|| <= combined envelope for every (t, pair)."""
    spec = H.spec
    if certificate.alpha <= spec.d:
        raise EnvelopeDomainError("Lieb-Robinson verification needs alpha > d")
    constants = constants or geometry_constants(spec, certificate.alpha, certificate.J)
    params = envelope_params(constants)
    cache = cache or spectral_decompose(H)
    pairs = reference_pairs(spec) if pairs is None else np.asarray(pairs, dtype=int).reshape(-1, 2)

    tables = parallel_map(lambda t: propagator_block_norms(cache, t, pairs), list(times), threads)
    ts, dist, meas, env, prs = [], [], [], [], []
    for table in tables:
        ts.append(np.full(len(pairs), table.t))
        dist.append(table.distances)
        meas.append(table.norms)
        env.append(lr_envelope(params, table.t, table.distances, "combined", strict_lemma))
        prs.append(pairs)
    return LRReport(
        t=np.concatenate(ts),
        distance=np.concatenate(dist),
        measured=np.concatenate(meas),
        envelope=np.concatenate(env),
        pairs=np.concatenate(prs),
    )


def check_sr_block_bound(
    split: SplitOperator,
    grain: CoarseGraining,
    constants: GeometryConstants,
    times: Sequence[float],
    include_partial: bool = False,
    cells: Sequence[int] | None = None,
    threads: int = 1,
) -> BoundReport:
    """Ratios ||P_R e^{-iH_sr t} P_R'|| / min{C2 e^{vt - |R-R'|}, 1}."""
    if grain.chi != split.chi:
        raise ValueError(f"grain chi={grain.chi} does not match split chi={split.chi}")
    if cells is None:
        cells = list(range(grain.n_cells)) if include_partial else grain.bulk_cells()
    cells = list(cells)
    cache = spectral_decompose(split.short_range, keep_matrix=False)
    dist = grain.coarse_distances()[np.ix_(cells, cells)]
    k = split.short_range.spec.internal_dim

    def one(t):
        measured = coarse_block_norms(cache.evolution(t), grain, k, cells)
        bound = np.minimum(constants.C2 * np.exp(constants.v * abs(t) - dist), 1.0)
        return (measured / bound).reshape(-1)

    ratios = parallel_map(one, list(times), threads)
    labels = [(float(t), cells[a], cells[b]) for t in times for a in range(len(cells)) for b in range(len(cells))]
    return BoundReport(ratios=np.concatenate(ratios) if ratios else np.zeros(0), labels=labels)
