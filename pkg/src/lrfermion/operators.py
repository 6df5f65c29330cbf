"""Alpha-decaying single-particle operators and their transformations.

Two representations are supported.  ``BlockOperator`` is a Hermitian matrix
over (site, orbital) indices, the usual number-conserving hopping matrix.
``MajoranaOperator`` is the real antisymmetric matrix A of a general
quadratic Hamiltonian written in Majorana modes, with 2|I| Majorana modes
per site stored as the internal dimension.

Block norms are spectral norms of the internal_dim x internal_dim blocks.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .lattice import CoarseGraining, GeometryConstants, LatticeSpec, distance_matrix

HERMITIAN_TOL = 1e-12


def _block_view(data: np.ndarray, n_sites: int, k: int) -> np.ndarray:
    """View of ``data`` as (site, site, k, k) blocks."""
    return data.reshape(n_sites, k, n_sites, k).transpose(0, 2, 1, 3)


def block_norm_table(data: np.ndarray, n_sites: int, k: int) -> np.ndarray:
    """Spectral norm of every (r, r') block, shape (n_sites, n_sites)."""
    if k == 1:
        return np.abs(data)
    blocks = _block_view(data, n_sites, k)
    return np.linalg.svd(blocks, compute_uv=False)[..., 0]


class _SiteBlocks:
    """Shared block plumbing for the two operator types."""

    data: np.ndarray
    spec: LatticeSpec

    def block(self, r, r_prime) -> np.ndarray:
        k = self.spec.internal_dim
        i = self.spec.index(r) * k
        j = self.spec.index(r_prime) * k
        return self.data[i : i + k, j : j + k]

    def block_norms(self) -> np.ndarray:
        if self._norms is None:
            object.__setattr__(self, "_norms", block_norm_table(self.data, self.spec.n_sites, self.spec.internal_dim))
        return self._norms

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def _check_shape(self) -> None:
        n = self.spec.dim
        if self.data.shape != (n, n):
            raise ValueError(f"expected a {n}x{n} matrix for {self.spec}, got {self.data.shape}")


@dataclass(frozen=True, eq=False)
class BlockOperator(_SiteBlocks):
    """Dense Hermitian single-particle Hamiltonian H on ``spec``."""

    data: np.ndarray
    spec: LatticeSpec
    _norms: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        self._check_shape()
        scale = max(np.linalg.norm(data), 1.0)
        if np.linalg.norm(data - data.conj().T) > HERMITIAN_TOL * scale:
            raise ValueError("operator is not Hermitian")
        data.setflags(write=False)

    def __add__(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator(self.data + other.data, self.spec)

    def __sub__(self, other: "BlockOperator") -> "BlockOperator":
        return BlockOperator(self.data - other.data, self.spec)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data, 2))


@dataclass(frozen=True, eq=False)
class MajoranaOperator(_SiteBlocks):
    """Real antisymmetric generator A; the Majorana modes evolve by e^{At}."""

    data: np.ndarray
    spec: LatticeSpec
    _norms: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if np.iscomplexobj(data):
            if np.any(np.abs(data.imag) > 0):
                raise ValueError("Majorana generator must be real")
            data = data.real
        data = np.array(data, dtype=float)
        object.__setattr__(self, "data", data)
        self._check_shape()
        scale = max(np.linalg.norm(data), 1.0)
        if np.linalg.norm(data + data.T) > HERMITIAN_TOL * scale:
            raise ValueError("antisymmetry violated: A != -A^T")
        data.setflags(write=False)

    def hermitian(self) -> np.ndarray:
        """The Hermitian matrix iA."""
        return 1j * self.data


@dataclass(frozen=True)
class DecayCertificate:
    """||H_rr'|| <= J / (|r - r'| + 1)^alpha for every pair; ``tight`` marks the minimal J."""

    J: float
    alpha: float
    tight: bool = False
    row_sum_bound: float | None = None

    def __post_init__(self):
        if self.J < 0:
            raise ValueError("J must be >= 0")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")


@dataclass(frozen=True)
class SplitOperator:
    short_range: BlockOperator
    long_range: BlockOperator
    chi: int


# ---------------------------------------------------------------------------
# model construction
# ---------------------------------------------------------------------------


def _as_internal(matrix, k: int, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if m.shape == (1, 1) and k > 1:
        m = m[0, 0] * np.eye(k)
    if m.shape != (k, k):
        raise ValueError(f"{name} must be {k}x{k}, got {m.shape}")
    return m


def power_law_amplitudes(spec: LatticeSpec, alpha: float) -> np.ndarray:
    """Scalar amplitude matrix f(r, r') with f = 1/(|r-r'|+1)^alpha off the diagonal.

    Under (anti)periodic boundaries each axis contributes its direct separation
    and the single wrapped image L - |x - x'|; all 2^d image combinations are
    summed, and anti-periodic images carry a factor -1 per wrapped axis.
    """
    sites = spec.sites()
    n = spec.n_sites
    if not spec.wraps:
        amp = (distance_matrix(spec) + 1.0) ** (-alpha)
        np.fill_diagonal(amp, 0.0)
        return amp

    direct = [np.abs(sites[:, a][:, None] - sites[:, a][None, :]).astype(float) for a in range(spec.d)]
    sign = -1.0 if spec.boundary == "antiperiodic" else 1.0
    amp = np.zeros((n, n))
    for wrapped in itertools.product((False, True), repeat=spec.d):
        sq = np.zeros((n, n))
        factor = np.ones((n, n))
        for axis, w in enumerate(wrapped):
            delta = direct[axis]
            if w:
                sq += (spec.L - delta) ** 2
                factor = factor * np.where(delta > 0, sign, 0.0)
            else:
                sq += delta**2
        amp += factor * (np.sqrt(sq) + 1.0) ** (-alpha)
    np.fill_diagonal(amp, 0.0)
    return amp


def build_power_law_model(
    spec: LatticeSpec,
    J: float,
    alpha: float,
    internal_coupling=None,
    impurities: Iterable[tuple] | None = None,
    onsite=None,
) -> BlockOperator:
    """H_rr' = J f(r, r') * internal_coupling for r != r', plus on-site terms.

    ``onsite`` is either one internal matrix applied to every site or a
    sequence with one entry (scalar or matrix) per site.  ``impurities`` is a
    list of ``(site, V)`` pairs added on top.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    k = spec.internal_dim
    coupling = _as_internal(np.eye(k) if internal_coupling is None else internal_coupling, k, "internal_coupling")
    if np.linalg.norm(coupling - coupling.conj().T) > HERMITIAN_TOL * max(np.linalg.norm(coupling), 1.0):
        raise ValueError("internal_coupling is not Hermitian")

    amp = J * power_law_amplitudes(spec, alpha)
    data = np.kron(amp, coupling) if k > 1 else amp.astype(complex)
    data = np.asarray(data, dtype=complex)

    diag = np.zeros((spec.n_sites, k, k), dtype=complex)
    if onsite is not None:
        arr = np.asarray(onsite)
        if arr.ndim in (1, 3) and arr.shape[0] == spec.n_sites:
            for r, v in enumerate(arr):
                diag[r] += _as_internal(v, k, "onsite")
        else:
            diag += _as_internal(arr, k, "onsite")
    for site, value in impurities or ():
        diag[spec.index(site)] += _as_internal(value, k, "impurity")
    for r in range(spec.n_sites):
        data[r * k : (r + 1) * k, r * k : (r + 1) * k] += diag[r]
    return BlockOperator(data, spec)


def staggered_chain(L: int, J: float, alpha: float, mu: float, boundary: str = "open") -> BlockOperator:
    """1D chain with power-law hopping and on-site potential +mu, -mu, +mu, ...

    The two-site unit cell opens a gap around zero energy.
    """
    spec = LatticeSpec(1, L, boundary)
    onsite = mu * (-1.0) ** np.arange(L)
    return build_power_law_model(spec, J, alpha, onsite=onsite)


def nearest_neighbor_chain(L: int, J: float = 1.0, onsite=None, boundary: str = "open") -> BlockOperator:
    spec = LatticeSpec(1, L, boundary)
    data = np.zeros((L, L), dtype=complex)
    idx = np.arange(L - 1)
    data[idx, idx + 1] = data[idx + 1, idx] = J
    if boundary != "open" and L > 2:
        s = -J if boundary == "antiperiodic" else J
        data[0, L - 1] = data[L - 1, 0] = s
    if onsite is not None:
        data[np.arange(L), np.arange(L)] += np.broadcast_to(np.asarray(onsite, dtype=float), (L,))
    return BlockOperator(data, spec)


def single_bond_model(D: int, J: float, alpha: float) -> BlockOperator:
    """Two sites at separation D on an open chain, joined by J' = J/(D+1)^alpha."""
    spec = LatticeSpec(1, D + 1)
    data = np.zeros((D + 1, D + 1), dtype=complex)
    data[0, D] = data[D, 0] = J / (D + 1.0) ** alpha
    return BlockOperator(data, spec)


def random_power_law_model(
    spec: LatticeSpec, J: float, alpha: float, rng: np.random.Generator, onsite_scale: float = 1.0
) -> BlockOperator:
    """H_rr' = J s_rr' U_rr' / (|r-r'|+1)^alpha with U_rr' a random unit-norm block and s in [0, 1].

    Diagonal blocks get the extra factor ``onsite_scale``.
    """
    k = spec.internal_dim
    n = spec.dim
    raw = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    raw = (raw + raw.conj().T) / 2
    norms = block_norm_table(raw, spec.n_sites, k)
    s = rng.uniform(0.0, 1.0, size=(spec.n_sites, spec.n_sites))
    s = np.triu(s) + np.triu(s, 1).T
    s[np.diag_indices_from(s)] *= onsite_scale
    site_factor = J * s / np.maximum(norms, 1e-300) / (distance_matrix(spec) + 1.0) ** alpha
    return BlockOperator(raw * _expand(site_factor, k), spec)


# ---------------------------------------------------------------------------
# certification and transformations
# ---------------------------------------------------------------------------


def certify_alpha_decay(H: BlockOperator | MajoranaOperator, alpha: float) -> DecayCertificate:
    """Minimal J with ||H_rr'|| <= J/(|r-r'|+1)^alpha, and the row-sum norm bound."""
    norms = H.block_norms()
    dist = distance_matrix(H.spec)
    J = float(np.max(norms * (dist + 1.0) ** alpha))
    row_sum = float(np.max(norms.sum(axis=1)))
    return DecayCertificate(J=J, alpha=float(alpha), tight=True, row_sum_bound=row_sum)


def _site_mask(mask: np.ndarray, k: int) -> np.ndarray:
    return np.kron(mask, np.ones((k, k), dtype=bool)) if k > 1 else mask


def split_range(H: BlockOperator, chi: int) -> SplitOperator:
    """Blockwise copy into |r-r'| <= chi and |r-r'| > chi parts."""
    if chi < 1:
        raise ValueError("chi must be >= 1")
    near = _site_mask(distance_matrix(H.spec) <= chi, H.spec.internal_dim)
    short = np.where(near, H.data, 0)
    long = np.where(near, 0, H.data)
    return SplitOperator(BlockOperator(short, H.spec), BlockOperator(long, H.spec), chi)


@dataclass
class BoundReport:
    """Measured-over-bound ratios for a family of samples."""

    ratios: np.ndarray
    labels: list[tuple] = field(default_factory=list)
    tol: float = 1e-12

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    @property
    def violations(self) -> list[tuple]:
        bad = np.nonzero(self.ratios > 1.0 + self.tol)[0]
        return [self.labels[i] for i in bad] if self.labels else bad.tolist()

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0 + self.tol


def coarse_block_norms(op: np.ndarray, grain: CoarseGraining, k: int, cells: Sequence[int]) -> np.ndarray:
    """||P_R op P_R'|| for the listed cells, shape (len(cells), len(cells))."""
    idx = [(grain.cells[c][:, None] * k + np.arange(k)).reshape(-1) for c in cells]
    out = np.zeros((len(cells), len(cells)))
    for a, ia in enumerate(idx):
        for b, ib in enumerate(idx):
            out[a, b] = np.linalg.norm(op[np.ix_(ia, ib)], 2)
    return out


def check_coarse_block_bound(
    split: SplitOperator,
    grain: CoarseGraining,
    constants: GeometryConstants,
    include_partial: bool = False,
) -> BoundReport:
    """Ratios ||P_R H_lr P_R'|| / (C1 chi^-(alpha-d) / (|R-R'|+1)^alpha) over coarse pairs."""
    if grain.chi != split.chi:
        raise ValueError(f"grain chi={grain.chi} does not match split chi={split.chi}")
    if constants.alpha <= constants.d:
        raise ValueError("coarse-grained bound needs alpha > d")
    cells = list(range(grain.n_cells)) if include_partial else grain.bulk_cells()
    measured = coarse_block_norms(split.long_range.data, grain, split.long_range.spec.internal_dim, cells)
    dist = grain.coarse_distances()[np.ix_(cells, cells)]
    bound = constants.C1 * grain.chi ** (-(constants.alpha - constants.d)) / (dist + 1.0) ** constants.alpha
    labels = [(cells[a], cells[b]) for a in range(len(cells)) for b in range(len(cells))]
    return BoundReport(ratios=(measured / bound).reshape(-1), labels=labels)


def damp_exponential(H: BlockOperator, kappa: float) -> BlockOperator:
    """H_kappa with blocks e^{-kappa |r-r'|} H_rr'."""
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if kappa == 0:
        return H
    damp = _expand(np.exp(-kappa * distance_matrix(H.spec)), H.spec.internal_dim)
    return BlockOperator(H.data * damp, H.spec)


def _expand(site_matrix: np.ndarray, k: int) -> np.ndarray:
    return np.kron(site_matrix, np.ones((k, k))) if k > 1 else site_matrix


def holder_bound(kappa: float, kappa_prime: float, constants: GeometryConstants) -> float:
    """2 c1 J |kappa - kappa'|^((alpha-d)/(alpha-d+1))."""
    s = constants.alpha - constants.d
    return 2.0 * constants.c1 * constants.J * abs(kappa - kappa_prime) ** (s / (s + 1.0))


def gap_safe_kappa(gap: float, constants: GeometryConstants) -> float:
    """Largest kappa whose Hoelder bound stays below ``gap``."""
    s = constants.alpha - constants.d
    return (gap / (2.0 * constants.c1 * constants.J)) ** ((s + 1.0) / s)


def spectral_gap(H: BlockOperator | np.ndarray) -> float:
    """min |eigenvalue|, the gap around a Fermi energy fixed at zero."""
    data = H.data if isinstance(H, BlockOperator) else H
    return float(np.min(np.abs(np.linalg.eigvalsh(data))))


# ---------------------------------------------------------------------------
# Majorana form
# ---------------------------------------------------------------------------


def build_majorana(spec: LatticeSpec, a: float, alpha: float, pattern=None, onsite=None) -> MajoranaOperator:
    """A_rr' = a/(|r-r'|+1)^alpha * P for r < r' (site order), A_r'r = -P^T.

    ``pattern`` is a real internal matrix rescaled to unit spectral norm, so
    the decay certificate of the result is (a, alpha) whenever the on-site
    part has norm at most ``a``.  ``onsite`` must be antisymmetric.
    """
    k = spec.internal_dim
    P = np.ones((k, k)) if pattern is None else np.asarray(pattern, dtype=float).reshape(k, k)
    pn = np.linalg.norm(P, 2)
    if pn > 0:
        P = P / pn
    amp = a * power_law_amplitudes(spec, alpha)
    upper = np.triu(amp, 1)
    data = np.kron(upper, P) - np.kron(upper, P).T
    if onsite is not None:
        O = np.asarray(onsite, dtype=float).reshape(k, k)
        if np.linalg.norm(O + O.T) > HERMITIAN_TOL * max(np.linalg.norm(O), 1.0):
            raise ValueError("antisymmetry violated: on-site block is not antisymmetric")
        data = data + np.kron(np.eye(spec.n_sites), O)
    return MajoranaOperator(data, spec)


def kitaev_chain(
    L: int, hopping: float, pairing: float, mu: float, alpha: float, boundary: str = "open"
) -> MajoranaOperator:
    """Long-range Kitaev chain in Majorana form, modes (a_j, b_j) with c_j = (a_j + i b_j)/2.

    Hopping and p-wave pairing both fall off as 1/(|j-l|+1)^alpha; the
    chemical potential couples a_j and b_j on site.
    """
    spec = LatticeSpec(1, L, boundary, internal_dim=2)
    amp = np.triu(power_law_amplitudes(spec, alpha), 1)
    bond = 0.5 * np.array([[0.0, hopping + pairing], [-hopping + pairing, 0.0]])
    data = np.kron(amp, bond)
    data = data - data.T
    site = 0.5 * np.array([[0.0, -mu], [mu, 0.0]])
    data = data + np.kron(np.eye(L), site)
    return MajoranaOperator(data, spec)
