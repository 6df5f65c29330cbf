"""Hypercubic lattice geometry, coarse graining and lattice-sum constants.

Distances are Euclidean; under periodic and anti-periodic boundary
conditions the minimum-image convention is used.  The lattice-sum constants
``b`` and ``c1`` are evaluated on the infinite lattice Z^d, which makes them
valid upper bounds for every finite open or (anti)periodic lattice, since a
minimum-image ball on a torus never holds more sites than the same ball in
Z^d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy import special

BOUNDARIES = ("open", "periodic", "antiperiodic")
DEFAULT_DENSE_CAP = 10_000

# enumeration radius for the Z^d lattice sums, per dimension
_SUM_RADIUS = {1: 1_000_000, 2: 1000, 3: 100}


class DenseCapError(ValueError):
    """Raised when a dense operation would exceed the configured row cap."""


class UnboundedRegimeError(ValueError):
    """Raised for alpha <= d, where the lattice-sum constants diverge."""


@dataclass(frozen=True)
class LatticeSpec:
    """Shape of a d-dimensional hypercubic lattice with ``internal_dim`` orbitals per site."""

    d: int
    L: int
    boundary: str = "open"
    internal_dim: int = 1

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.L < 2:
            raise ValueError(f"side L must be >= 2, got {self.L}")
        if self.internal_dim < 1:
            raise ValueError(f"internal_dim must be >= 1, got {self.internal_dim}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def dim(self) -> int:
        """Total single-particle dimension L^d * internal_dim."""
        return self.n_sites * self.internal_dim

    @property
    def wraps(self) -> bool:
        return self.boundary != "open"

    def check_dense(self, cap: int = DEFAULT_DENSE_CAP) -> None:
        if self.dim > cap:
            raise DenseCapError(
                f"{self.dim} rows exceeds the dense-matrix cap of {cap} "
                f"(d={self.d}, L={self.L}, internal_dim={self.internal_dim})"
            )

    def sites(self) -> np.ndarray:
        """Integer coordinates of all sites, shape (L^d, d), row-major order."""
        return _sites(self.d, self.L)

    def index(self, coord: int | Sequence[int]) -> int:
        """Site index of ``coord``; plain integers are passed through."""
        if isinstance(coord, (int, np.integer)):
            if not 0 <= coord < self.n_sites:
                raise IndexError(f"site {coord} outside lattice of {self.n_sites} sites")
            return int(coord)
        coord = tuple(int(c) for c in coord)
        if len(coord) != self.d:
            raise ValueError(f"expected {self.d} coordinates, got {coord}")
        return int(np.ravel_multi_index(coord, (self.L,) * self.d))

    def coord(self, index: int) -> tuple[int, ...]:
        return tuple(int(c) for c in np.unravel_index(index, (self.L,) * self.d))

    def displacement(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Per-axis |a - b|, minimum image under wrapping boundaries."""
        delta = np.abs(np.asarray(a) - np.asarray(b))
        if self.wraps:
            delta = np.minimum(delta, self.L - delta)
        return delta

    def distance(self, a, b) -> float:
        ca = np.asarray(self.coord(a) if isinstance(a, (int, np.integer)) else a)
        cb = np.asarray(self.coord(b) if isinstance(b, (int, np.integer)) else b)
        return float(np.sqrt(np.sum(self.displacement(ca, cb) ** 2.0)))

    def distances_from(self, site) -> np.ndarray:
        """Distances from one site to every site, shape (L^d,)."""
        origin = np.asarray(self.coord(self.index(site)))
        return np.sqrt(np.sum(self.displacement(self.sites(), origin) ** 2.0, axis=1))


@lru_cache(maxsize=16)
def _sites(d: int, L: int) -> np.ndarray:
    grid = np.indices((L,) * d).reshape(d, -1).T
    grid.setflags(write=False)
    return grid


@lru_cache(maxsize=8)
def distance_matrix(spec: LatticeSpec) -> np.ndarray:
    """All pairwise site distances, shape (L^d, L^d).  Read-only, cached."""
    sites = spec.sites()
    sq = np.zeros((spec.n_sites, spec.n_sites))
    for axis in range(spec.d):
        x = sites[:, axis]
        delta = np.abs(x[:, None] - x[None, :])
        if spec.wraps:
            delta = np.minimum(delta, spec.L - delta)
        sq += delta.astype(float) ** 2
    out = np.sqrt(sq)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Lattice:
    spec: LatticeSpec
    sites: np.ndarray

    def distance(self, a, b) -> float:
        return self.spec.distance(a, b)


def build_lattice(spec: LatticeSpec, dense_cap: int | None = None) -> Lattice:
    """Enumerate the sites of ``spec``; ``dense_cap`` additionally enforces the dense-row limit."""
    if dense_cap is not None:
        spec.check_dense(dense_cap)
    return Lattice(spec=spec, sites=spec.sites())


# ---------------------------------------------------------------------------
# coarse graining
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoarseGraining:
    """Partition of the sites into cells C_R of linear size ``chi``.

    ``labels[k]`` is the integer coarse coordinate of cell ``k``,
    ``cells[k]`` the fine site indices it contains and ``centers[k]`` the
    position of R measured in the fine-lattice metric.  Cells with fewer than
    chi^d sites are listed in ``partial``.
    """

    spec: LatticeSpec
    chi: int
    offset: tuple[int, ...]
    labels: tuple[tuple[int, ...], ...]
    cells: tuple[np.ndarray, ...]
    centers: np.ndarray
    cell_of: np.ndarray
    partial: frozenset[int]
    coarse_spec: LatticeSpec | None
    degenerate: bool = False
    _dist: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_map(self) -> dict[tuple[int, ...], list[int]]:
        return {lab: cell.tolist() for lab, cell in zip(self.labels, self.cells)}

    def coarse_distance(self, k1: int, k2: int) -> float:
        """|R - R'| in coarse units (fine-metric distance of the centers over chi)."""
        return float(self.coarse_distances()[k1, k2])

    def coarse_distances(self) -> np.ndarray:
        return self._dist

    def bulk_cells(self) -> list[int]:
        return [k for k in range(self.n_cells) if k not in self.partial]

    def R0(self) -> float:
        """2/chi * max over cells of the largest site-to-center distance."""
        sites = self.spec.sites().astype(float)
        centers = self.centers[self.cell_of]
        delta = np.abs(sites - centers)
        if self.spec.wraps:
            delta = np.minimum(delta, self.spec.L - delta)
        return 2.0 * float(np.sqrt((delta**2).sum(axis=1)).max()) / self.chi


def coarse_grain(spec: LatticeSpec, chi: int, offset: Sequence[int] | None = None) -> CoarseGraining:
    """Group sites into cells of side ``chi``.

    Along each axis a site ``x`` falls into cell ``floor((x + offset) / chi)``.
    The cell center sits at ``chi * R + (chi - 1) / 2 - offset``, which makes
    ``chi * (|R - R'| - R0) <= |r - r'|`` hold by the triangle inequality.
    """
    if chi < 1:
        raise ValueError(f"chi must be >= 1, got {chi}")
    off = np.zeros(spec.d, dtype=int) if offset is None else np.asarray(offset, dtype=int)
    if off.shape != (spec.d,) or np.any(off < 0) or np.any(off >= chi):
        raise ValueError(f"offset must have {spec.d} entries in [0, chi), got {offset}")

    sites = spec.sites()
    raw = (sites + off) // chi
    labels, cell_of = np.unique(raw, axis=0, return_inverse=True)
    cell_of = cell_of.reshape(-1)
    order = np.argsort(cell_of, kind="stable")
    bounds = np.searchsorted(cell_of[order], np.arange(len(labels) + 1))
    cells = tuple(order[bounds[k] : bounds[k + 1]] for k in range(len(labels)))
    centers = chi * labels + (chi - 1) / 2.0 - off

    full = chi**spec.d
    partial = frozenset(k for k, c in enumerate(cells) if len(c) < full)
    degenerate = len(cells) == 1

    per_axis = labels.max(axis=0) - labels.min(axis=0) + 1
    coarse_spec = None
    if not degenerate and np.all(per_axis == per_axis[0]) and per_axis[0] >= 2:
        coarse_spec = LatticeSpec(spec.d, int(per_axis[0]), spec.boundary, spec.internal_dim)

    delta = np.abs(centers[:, None, :] - centers[None, :, :])
    if spec.wraps:
        delta = np.minimum(delta, spec.L - delta)
    dist = np.sqrt((delta**2).sum(axis=-1)) / chi
    dist.setflags(write=False)

    return CoarseGraining(
        spec=spec,
        chi=chi,
        offset=tuple(int(o) for o in off),
        labels=tuple(tuple(int(x) for x in lab) for lab in labels),
        cells=cells,
        centers=centers,
        cell_of=cell_of,
        partial=partial,
        coarse_spec=coarse_spec,
        degenerate=degenerate,
        _dist=dist,
    )


def aligned_offset(spec: LatticeSpec, chi: int, r, r_prime) -> tuple[int, ...]:
    """Mesh offset placing ``r`` on the cell edge that faces ``r_prime``.

    With this offset every axis satisfies chi * |R_i - R'_i| >= |r_i - r'_i|,
    hence chi * |R - R'| >= |r - r'| for the designated pair.  Open boundaries only.
    """
    if spec.wraps:
        raise ValueError("mesh alignment is defined for open boundaries only")
    a = np.asarray(spec.coord(spec.index(r)))
    b = np.asarray(spec.coord(spec.index(r_prime)))
    off = np.where(b >= a, (chi - 1 - a) % chi, (-a) % chi)
    return tuple(int(o) for o in off)


# ---------------------------------------------------------------------------
# lattice-sum constants
# ---------------------------------------------------------------------------


def ball_volume(d: int) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d (2 for d=1)."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@lru_cache(maxsize=4)
def _shells(d: int, radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Distinct radii of Z^d points with |v| <= radius and their multiplicities."""
    if d == 1:
        n = np.arange(radius + 1, dtype=float)
        counts = np.full(radius + 1, 2.0)
        counts[0] = 1.0
        return n, counts
    axis = np.arange(-radius, radius + 1, dtype=np.int64) ** 2
    sq = axis
    for _ in range(d - 1):
        sq = (sq[..., None] + axis).reshape(-1)
    sq = sq[sq <= radius * radius]
    values, counts = np.unique(sq, return_counts=True)
    return np.sqrt(values.astype(float)), counts.astype(float)


def _tail_integral(d: int, alpha: float, radius: float) -> float:
    """Continuum estimate of sum_{|v| > radius} (|v|+1)^-alpha.

    Closed form of area * int_radius^inf x^(d-1) (x+1)^-alpha dx, obtained by
    expanding x^(d-1) = ((x+1) - 1)^(d-1) binomially.
    """
    total = 0.0
    for k in range(d):
        total += math.comb(d - 1, k) * (-1) ** (d - 1 - k) * (radius + 1.0) ** (k + 1 - alpha) / (alpha - k - 1)
    return sphere_area(d) * total


@lru_cache(maxsize=64)
def lattice_sum_constants(d: int, alpha: float, radius: int | None = None) -> tuple[float, float]:
    """Constants (b, c1) of the counting and tail inequalities on Z^d.

    b  = sup_r #{|v| <= r} / (r+1)^d
    c1 = sup_r (r+1)^(alpha-d) * sum_{|v| >= r} (|v|+1)^-alpha

    Both suprema are scanned exactly over every shell radius up to
    ``radius``; beyond it the tail sum is replaced by its integral and the
    r -> infinity limits (ball volume, sphere area / (alpha - d)) are
    included in the maximum.
    """
    if alpha <= d:
        raise UnboundedRegimeError(f"unbounded regime: constants diverge for alpha={alpha} <= d={d}")
    radius = radius or _SUM_RADIUS[d]
    radii, counts = _shells(d, radius)

    cumulative = np.cumsum(counts)
    b = max(float(np.max(cumulative / (radii + 1.0) ** d)), ball_volume(d))

    weights = counts * (radii + 1.0) ** (-alpha)
    tails = np.cumsum(weights[::-1])[::-1] + _tail_integral(d, alpha, radius)
    c1_scan = float(np.max((radii + 1.0) ** (alpha - d) * tails))
    c1 = max(c1_scan, sphere_area(d) / (alpha - d))
    return b, c1


def c1_closed_form_1d(alpha: float) -> float:
    """sum over Z of (|n|+1)^-alpha = 2 zeta(alpha) - 1; the r=0 value of c1 in d=1."""
    return 2.0 * float(special.zeta(alpha)) - 1.0


@dataclass(frozen=True)
class GeometryConstants:
    """Lattice constants and the bound constants derived from them."""

    d: int
    alpha: float
    J: float
    b: float
    c1: float
    c2: float
    R0: float
    v: float
    C1: float
    C2: float
    lambda_hk: float
    t_c: float


def derive_constants(d: int, alpha: float, J: float, b: float, c1: float, R0: float) -> GeometryConstants:
    c2 = 2.0 ** (alpha + 1) * (b + c1)
    v = math.e * c1 * J
    return GeometryConstants(
        d=d,
        alpha=alpha,
        J=J,
        b=b,
        c1=c1,
        c2=c2,
        R0=R0,
        v=v,
        C1=c1 * J * (R0 + 1.0 + c1 ** (-1.0 / alpha)) ** alpha,
        C2=math.exp(R0),
        lambda_hk=c2 * J,
        t_c=(alpha - 1.0 - R0) / v if v > 0 else math.inf,
    )


def geometry_constants(
    spec: LatticeSpec, alpha: float, J: float, grain: CoarseGraining | None = None
) -> GeometryConstants:
    """Bound constants for ``spec`` at decay exponent ``alpha`` and amplitude ``J``.

    ``R0`` comes from ``grain`` when given.  Without a grain it is sqrt(d), the
    supremum over chi of the centered-cell value sqrt(d) (chi - 1) / chi,
    which is what envelopes that pick chi as a function of time need.
    """
    b, c1 = lattice_sum_constants(spec.d, float(alpha))
    R0 = grain.R0() if grain is not None else math.sqrt(spec.d)
    return derive_constants(spec.d, float(alpha), float(J), b, c1, R0)


# ---------------------------------------------------------------------------
# numerical checks of the convolution and reproducibility inequalities
# ---------------------------------------------------------------------------


@dataclass
class LatticeSumReport:
    mode: str
    ratios: np.ndarray
    samples: list[tuple]

    @property
    def worst_ratio(self) -> float:
        return float(np.max(self.ratios)) if len(self.ratios) else 0.0

    @property
    def passed(self) -> bool:
        return self.worst_ratio <= 1.0 + 1e-12


def convolution_lhs(spec: LatticeSpec, alpha: float, R1, R2, xi: float) -> float:
    d1 = spec.distances_from(R1)
    d2 = spec.distances_from(R2)
    return float(np.sum(np.minimum(np.exp(xi - d2), 1.0) / (d1 + 1.0) ** alpha))


def convolution_rhs(c1: float, alpha: float, dist12: float, xi: float) -> float:
    return c1 * min((4.0 * (xi + 1.0) / (dist12 + 1.0)) ** alpha, 1.0)


def _reach(theta: float, alpha: float, dist: np.ndarray) -> np.ndarray:
    return np.minimum(((theta + 1.0) / (dist + 1.0)) ** alpha, 1.0)


def reproducibility_lhs(spec: LatticeSpec, alpha: float, R1, R2, theta: float) -> float:
    return float(np.sum(_reach(theta, alpha, spec.distances_from(R1)) * _reach(theta, alpha, spec.distances_from(R2))))


def reproducibility_rhs(c2: float, d: int, alpha: float, dist12: float, theta: float) -> float:
    return c2 * (theta + 1.0) ** d * float(_reach(theta, alpha, np.asarray(dist12)))


def check_lattice_sum_bounds(
    spec: LatticeSpec,
    alpha: float,
    constants: GeometryConstants,
    mode: str,
    trials: int = 1000,
    seed: int = 0,
    samples: Iterable[tuple] | None = None,
    xi_span: float = 10.0,
    theta_max: float | None = None,
) -> LatticeSumReport:
    """Compare exact lattice sums with the claimed right-hand sides.

    ``mode="convolution"`` samples (R1, R2, xi) with xi > alpha - 1;
    ``mode="reproducibility"`` samples (R1, R2, theta) with theta >= 0.
    Explicit ``samples`` override the random draw.
    """
    if mode not in ("convolution", "reproducibility"):
        raise ValueError(f"unknown mode {mode!r}")
    if samples is None:
        rng = np.random.default_rng(seed)
        r1 = rng.integers(spec.n_sites, size=trials)
        r2 = rng.integers(spec.n_sites, size=trials)
        if mode == "convolution":
            par = (alpha - 1.0) + rng.uniform(1e-9, xi_span, size=trials)
        else:
            par = rng.uniform(0.0, theta_max if theta_max is not None else spec.L / 4, size=trials)
        samples = list(zip(r1.tolist(), r2.tolist(), par.tolist()))
    samples = list(samples)

    ratios = np.empty(len(samples))
    for k, (R1, R2, p) in enumerate(samples):
        dist12 = spec.distance(spec.index(R1), spec.index(R2))
        if mode == "convolution":
            if p <= alpha - 1.0:
                raise ValueError(f"convolution bound needs xi > alpha - 1, got xi={p}")
            lhs = convolution_lhs(spec, alpha, R1, R2, p)
            rhs = convolution_rhs(constants.c1, alpha, dist12, p)
        else:
            lhs = reproducibility_lhs(spec, alpha, R1, R2, p)
            rhs = reproducibility_rhs(constants.c2, spec.d, alpha, dist12, p)
        ratios[k] = lhs / rhs
    return LatticeSumReport(mode=mode, ratios=ratios, samples=samples)
