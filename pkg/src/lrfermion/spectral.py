"""Green's functions, ground-state covariance matrices, clustering envelopes and bound states.

The Fermi energy is fixed at zero throughout.  In the number-conserving
form C = (1 - sgn H)/2; in the Majorana form Gamma = i sgn(iA), which is
real and antisymmetric.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from .dynamics import SpectralCache, _pair_distances, envelope_params, hermitian_eigh, reference_pairs
from .filters import sign_transform_by_quadrature, time_cutoff
from .fitting import DecayFit, decay_fit
from .lattice import GeometryConstants, LatticeSpec
from .operators import BlockOperator, block_norm_table

SINGULAR_TOL = 1e-10
FORMALISMS = ("number_conserving", "majorana")


class ResolventSingularError(ValueError):
    """z lies on the spectrum."""


class GaplessError(ValueError):
    """Zero is an eigenvalue, so the ground state is not unique."""


class NoBoundStateError(ValueError):
    """No eigenvalue of the perturbed operator leaves the clean band."""


# ---------------------------------------------------------------------------
# Green's function
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GreenEvaluation:
    """Blocks of G(z) = (z - H)^{-1} for selected site pairs."""

    z: complex
    delta_z: float
    pairs: np.ndarray
    blocks: np.ndarray
    spec: LatticeSpec

    def block(self, r, r_prime) -> np.ndarray:
        hit = np.nonzero((self.pairs[:, 0] == r) & (self.pairs[:, 1] == r_prime))[0]
        if not len(hit):
            raise KeyError((r, r_prime))
        return self.blocks[hit[0]]

    def norms(self) -> np.ndarray:
        return np.linalg.svd(self.blocks, compute_uv=False)[:, 0]

    def distances(self) -> np.ndarray:
        return _pair_distances(self.spec, self.pairs)


def distance_to_spectrum(cache: SpectralCache, z: complex) -> float:
    return float(np.min(np.abs(z - cache.eigenvalues)))


def green_blocks(cache: SpectralCache, z: complex, pairs: np.ndarray | None = None) -> GreenEvaluation:
    spec = cache.spec
    delta = distance_to_spectrum(cache, z)
    if delta <= SINGULAR_TOL:
        raise ResolventSingularError(f"resolvent singular: z={z} is within {delta:.3g} of the spectrum")
    pairs = reference_pairs(spec) if pairs is None else np.asarray(pairs, dtype=int).reshape(-1, 2)
    k = spec.internal_dim
    row_sites = np.unique(pairs[:, 0])
    rows = cache.rows(row_sites, 1.0 / (z - cache.eigenvalues))
    pos = {int(s): i for i, s in enumerate(row_sites)}
    blocks = np.empty((len(pairs), k, k), dtype=complex)
    for n, (a, b) in enumerate(pairs):
        i = pos[int(a)] * k
        blocks[n] = rows[i : i + k, b * k : (b + 1) * k]
    return GreenEvaluation(z=complex(z), delta_z=delta, pairs=pairs, blocks=blocks, spec=spec)


def resolvent(matrix: np.ndarray, z: complex) -> np.ndarray:
    """(z - M)^{-1} by a direct dense inverse, independent of any eigen-decomposition."""
    return np.linalg.inv(z * np.eye(len(matrix)) - matrix)


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    matrix: np.ndarray
    formalism: str
    spec: LatticeSpec
    _norms: np.ndarray | None = field(default=None, repr=False)

    def block(self, r, r_prime) -> np.ndarray:
        k = self.spec.internal_dim
        i, j = self.spec.index(r) * k, self.spec.index(r_prime) * k
        return self.matrix[i : i + k, j : j + k]

    def block_norms(self) -> np.ndarray:
        if self._norms is None:
            object.__setattr__(self, "_norms", block_norm_table(self.matrix, self.spec.n_sites, self.spec.internal_dim))
        return self._norms

    def projector_residual(self) -> float:
        """||C^2 - C|| (number conserving) or ||Gamma^2 + 1|| (Majorana)."""
        M = self.matrix
        if self.formalism == "majorana":
            return float(np.linalg.norm(M @ M + np.eye(len(M)), 2))
        return float(np.linalg.norm(M @ M - M, 2))


def _require_gap(cache: SpectralCache) -> None:
    if cache.gap() <= SINGULAR_TOL:
        raise GaplessError(f"Fermi level inside band: |eigenvalue| = {cache.gap():.3g}")


def covariance(cache: SpectralCache, formalism: str | None = None) -> CovarianceMatrix:
    """C = (1 - sgn H)/2, or Gamma = i sgn(iA) for a Majorana cache."""
    formalism = formalism or ("majorana" if cache.majorana else "number_conserving")
    if formalism not in FORMALISMS:
        raise ValueError(f"unknown formalism {formalism!r}")
    _require_gap(cache)
    sign = np.sign(cache.eigenvalues)
    if formalism == "majorana":
        M = cache.apply(1j * sign).real
    else:
        M = cache.apply(0.5 * (1.0 - sign))
    return CovarianceMatrix(matrix=M, formalism=formalism, spec=cache.spec)


@dataclass(frozen=True)
class Contour:
    """Circle |z - center| = radius sampled at ``nodes`` equispaced points."""

    center: complex
    radius: float
    nodes: int = 64

    def points(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes z_j and trapezoid weights w_j with sum_j w_j g(z_j) ~ oint dz/(2 pi i) g(z)."""
        theta = 2.0 * np.pi * np.arange(self.nodes) / self.nodes
        offset = self.radius * np.exp(1j * theta)
        return self.center + offset, offset / self.nodes

    def encloses(self, energies: np.ndarray) -> np.ndarray:
        return np.abs(np.asarray(energies) - self.center) < self.radius

    def clearance(self, energies: np.ndarray) -> float:
        return float(np.min(np.abs(np.abs(np.asarray(energies) - self.center) - self.radius)))

    def convergence_factor(self, energies: np.ndarray) -> float:
        """Geometric rate q of the trapezoid error, q^nodes."""
        rho = np.abs(np.asarray(energies) - self.center) / self.radius
        return float(np.max(np.where(rho < 1, rho, 1.0 / np.maximum(rho, 1e-300))))


def default_contour(energies: np.ndarray, target: float = 1e-14, min_nodes: int = 64, max_nodes: int = 20000) -> Contour:
    """Circle from the midgap point to the left of the lowest level by the same clearance.

    The node count is chosen from the geometric convergence rate so that the
    trapezoid error falls below ``target``.
    """
    e = np.sort(np.asarray(energies, dtype=float))
    neg, pos = e[e < 0], e[e > 0]
    if not len(neg):
        return Contour(center=complex(e[0] - 1.0), radius=0.5, nodes=min_nodes)
    mid = 0.5 * (neg[-1] + pos[0]) if len(pos) else 0.5 * neg[-1]
    margin = mid - neg[-1]
    left = neg[0] - margin
    contour = Contour(center=complex(0.5 * (mid + left)), radius=0.5 * (mid - left), nodes=min_nodes)
    q = contour.convergence_factor(e)
    nodes = int(np.clip(math.ceil(math.log(target) / math.log(q)) + 1, min_nodes, max_nodes))
    return Contour(contour.center, contour.radius, nodes)


def _check_contour(contour: Contour, energies: np.ndarray) -> None:
    if contour.clearance(energies) <= SINGULAR_TOL * max(1.0, contour.radius):
        raise ValueError("contour intersects the spectrum")


def contour_projector(matrix: np.ndarray, energies: np.ndarray, contour: Contour) -> np.ndarray:
    """oint dz/(2 pi i) (z - M)^{-1} by the trapezoid rule, with direct inverses at each node."""
    _check_contour(contour, energies)
    z, w = contour.points()
    out = np.zeros(matrix.shape, dtype=complex)
    for zj, wj in zip(z, w):
        out += wj * resolvent(matrix, zj)
    return out


def covariance_contour(
    cache: SpectralCache, contour: Contour | None = None, formalism: str | None = None
) -> CovarianceMatrix:
    """Covariance from the contour integral of the resolvent.

    Number conserving: C = oint dz/(2 pi i) G(z) around the occupied levels.
    Majorana: Gamma = i 1 - oint dz/pi Y(z) with Y(z) = (z - iA)^{-1}.
    """
    if cache.matrix is None:
        raise ValueError("contour route needs the source matrix in the cache")
    formalism = formalism or ("majorana" if cache.majorana else "number_conserving")
    contour = contour or default_contour(cache.eigenvalues)
    P = contour_projector(cache.matrix, cache.eigenvalues, contour)
    if formalism == "majorana":
        # oint dz/pi Y = 2i P
        M = (1j * np.eye(len(P)) - 2j * P).real
    else:
        M = P
    return CovarianceMatrix(matrix=M, formalism=formalism, spec=cache.spec)


def deformation_difference(H_a: np.ndarray, H_b: np.ndarray, contour: Contour | None = None) -> np.ndarray:
    """oint dz/(2 pi i) G_a(z) (H_b - H_a) G_b(z), which equals C_b - C_a."""
    ea = np.linalg.eigvalsh(H_a)
    eb = np.linalg.eigvalsh(H_b)
    both = np.concatenate([ea, eb])
    if np.min(np.abs(both)) <= SINGULAR_TOL:
        raise GaplessError("Fermi level inside band")
    # one circle around the occupied levels of both operators
    contour = contour or default_contour(both)
    _check_contour(contour, both)
    dH = H_b - H_a
    z, w = contour.points()
    out = np.zeros(H_a.shape, dtype=complex)
    for zj, wj in zip(z, w):
        out += wj * (resolvent(H_a, zj) @ dH @ resolvent(H_b, zj))
    return out


@dataclass(frozen=True)
class SignReconstruction:
    matrix: np.ndarray
    error: float
    bound: float
    gap: float
    sigma: float

    @property
    def passed(self) -> bool:
        return self.error <= self.bound


def sign_error_bound(sigma: float, gap: float) -> float:
    """sigma/(sqrt(pi) gap) e^{-gap^2/sigma^2}."""
    return sigma / (math.sqrt(math.pi) * gap) * math.exp(-(gap**2) / sigma**2)


def reconstruct_sign_via_filter(
    cache: SpectralCache, sigma: float, time_cutoff_: float | None = None, quad_tol: float = 1e-8
) -> SignReconstruction:
    """int dt/(2 pi) f(t) e^{-iHt} with the erf filter, compared against sgn H.

    The time integral is done per eigenvalue by composite Gauss-Legendre up
    to ``time_cutoff_``.  ``bound`` already includes ``quad_tol``.
    """
    _require_gap(cache)
    T = time_cutoff_ if time_cutoff_ is not None else time_cutoff("erf_sign", sigma)
    F = sign_transform_by_quadrature(cache.eigenvalues, sigma, T)
    approx = cache.apply(F.astype(complex))
    exact = cache.apply(np.sign(cache.eigenvalues).astype(complex))
    gap = cache.gap()
    return SignReconstruction(
        matrix=approx,
        error=float(np.linalg.norm(approx - exact, 2)),
        bound=sign_error_bound(sigma, gap) + quad_tol,
        gap=gap,
        sigma=sigma,
    )


# ---------------------------------------------------------------------------
# clustering envelopes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterEnvelope:
    """Explicit algebraic envelope on ||C_rr'|| or ||G_rr'(z)|| as a function of D = |r - r'|.

    ``gap`` is Delta for the covariance and Delta(z) for the Green's function.
    """

    target: str
    constants: GeometryConstants
    gap: float
    gamma: float = 0.0

    def __post_init__(self):
        if self.target not in ("covariance", "green"):
            raise ValueError(f"unknown target {self.target!r}")
        if not self.gap > 0:
            raise ValueError("gap must be > 0: the envelopes diverge for Delta(z) -> 0")
        if self.constants.alpha <= self.constants.d:
            raise ValueError("clustering envelopes need alpha > d")

    def P(self, t: float) -> float:
        """Polynomial prefactor of the covariance envelope."""
        c = self.constants
        a, v, lam, gap = c.alpha, c.v, c.lambda_hk, self.gap
        K = float(envelope_params(c).K(t))
        return (
            v * t * K / (math.pi * (a - 1.0))
            + math.exp((a - 1.0) * lam / v) / (math.pi * c.c2)
            + v / (math.pi * (a - 1.0) * gap)
            + math.sqrt(v / (2.0 * math.pi * (a - 1.0) * gap))
            + 0.5
        )

    def lr_profile(self, t: float, D: float) -> float:
        """p(t) = (D+1)^alpha B(t): the Lieb-Robinson bound with the distance factor removed."""
        c = self.constants
        scale = (D + 1.0) ** c.alpha
        p = min(math.expm1(min(c.lambda_hk * t, 700.0)) / c.c2, scale)
        if t > max(c.t_c, 0.0):
            p = min(p, float(envelope_params(c).K(t)))
        return p

    def integrated_profile(self, tau: float, D: float) -> float:
        c = self.constants
        breaks = [x for x in (c.t_c,) if 0.0 < x < tau]
        val, _ = integrate.quad(self.lr_profile, 0.0, tau, args=(D,), points=breaks or None, limit=400)
        return val

    def _one(self, D: float) -> float:
        a = self.constants.alpha
        decay = (D + 1.0) ** a
        if self.target == "covariance":
            tau2 = 2.0 * a / self.gap * math.log(D + 1.0)
            return self.P(tau2) / decay
        gap, g = self.gap, self.gamma
        Lg = a * math.log(D + 1.0) + 1.0
        tau = 2.0 * math.sqrt(gap**2 + g**2) * Lg / gap**2
        t1 = self.integrated_profile(tau, D) / decay
        t2 = 1.0 / (gap * math.sqrt(math.pi * Lg) * (math.e * decay) ** (1.0 + 2.0 * g**2 / gap**2))
        t3 = 1.0 / (math.e * gap * decay)
        return t1 + t2 + t3

    def sigma(self, D: float) -> float:
        """Filter width used at separation D."""
        a = self.constants.alpha
        if self.target == "covariance":
            return math.sqrt(self.gap**2 / (a * math.log(D + 1.0))) if D > 0 else math.inf
        return self.gap / math.sqrt(a * math.log(D + 1.0) + 1.0)

    def __call__(self, D):
        D = np.asarray(D, dtype=float)
        flat = np.array([self._one(float(x)) for x in D.reshape(-1)])
        return flat.reshape(D.shape) if D.shape else float(flat[0])


def clustering_envelope(
    target: str, constants: GeometryConstants, gap: float, gamma: float = 0.0
) -> ClusterEnvelope:
    return ClusterEnvelope(target=target, constants=constants, gap=gap, gamma=gamma)


CLUSTER_CSV_HEADER = ("distance", "block_norm", "envelope", "ratio")


@dataclass
class ClusterReport:
    distance: np.ndarray
    norms: np.ndarray
    envelope: np.ndarray
    fit: DecayFit | None

    @property
    def ratio(self) -> np.ndarray:
        return self.norms / self.envelope

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratio)) if len(self.ratio) else 0.0

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CLUSTER_CSV_HEADER)
            for row in zip(self.distance, self.norms, self.envelope, self.ratio):
                w.writerow([repr(float(x)) for x in row])


def verify_clustering(
    measured: CovarianceMatrix | GreenEvaluation,
    envelope: ClusterEnvelope,
    pairs: np.ndarray | None = None,
    window: tuple[float, float] | None = None,
) -> ClusterReport:
    """Compare measured block norms with ``envelope`` and fit their decay slope."""
    if isinstance(measured, GreenEvaluation):
        dist = measured.distances()
        norms = measured.norms()
    else:
        spec = measured.spec
        pairs = reference_pairs(spec) if pairs is None else np.asarray(pairs, dtype=int).reshape(-1, 2)
        dist = _pair_distances(spec, pairs)
        norms = measured.block_norms()[pairs[:, 0], pairs[:, 1]]
    env = envelope(dist)
    fit = None
    if window is not None:
        fit = decay_fit(dist, norms, window=window)
    return ClusterReport(distance=dist, norms=norms, envelope=np.asarray(env), fit=fit)


# ---------------------------------------------------------------------------
# impurity bound states
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundState:
    energy: float
    psi: np.ndarray
    residual: float
    band: tuple[float, float]
    impurity_sites: tuple[int, ...]
    distances: np.ndarray
    amplitudes: np.ndarray
    fit: DecayFit | None

    def rows(self):
        for site, amp in enumerate(self.amplitudes):
            yield site, float(amp)


def bound_state(
    H: BlockOperator,
    clean: SpectralCache,
    window: tuple[float, float] | None = (50.0, 500.0),
    band_tol: float = 1e-9,
) -> BoundState:
    """Eigenpair of H outside the clean band, checked against psi = G_clean(E) V psi.

    V = H - H_clean is read off the cache's source matrix.  The tail of
    |psi| is fitted against the distance from the impurity.
    """
    if clean.matrix is None:
        raise ValueError("bound-state analysis needs the clean matrix in the cache")
    spec = H.spec
    V = H.data - clean.matrix
    lo, hi = float(clean.eigenvalues.min()), float(clean.eigenvalues.max())
    eps, U = hermitian_eigh(H.data)
    outside = np.maximum(lo - eps, eps - hi)
    best = int(np.argmax(outside))
    if outside[best] <= band_tol:
        raise NoBoundStateError("no bound state: every eigenvalue lies inside the clean band")
    E, psi = float(eps[best]), U[:, best]

    Vpsi = V @ psi
    W = clean.eigenvectors
    lippmann = W @ ((W.conj().T @ Vpsi) / (E - clean.eigenvalues))
    residual = float(np.linalg.norm(psi - lippmann))

    k = spec.internal_dim
    site_v = block_norm_table(V, spec.n_sites, k)
    imp = tuple(int(s) for s in np.nonzero(site_v.max(axis=1) > 0)[0])
    amp = np.linalg.norm(psi.reshape(spec.n_sites, k), axis=1)
    if imp:
        dist = np.min(np.stack([spec.distances_from(s) for s in imp]), axis=0)
    else:
        dist = spec.distances_from(0)
    fit = decay_fit(dist, amp, window=window) if window is not None else None
    return BoundState(
        energy=E,
        psi=psi,
        residual=residual,
        band=(lo, hi),
        impurity_sites=imp,
        distances=dist,
        amplitudes=amp,
        fit=fit,
    )
