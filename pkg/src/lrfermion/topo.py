"""Bloch-space models for the topological interpolation path.

Every model here is a linear combination h(k) = sum_mu n_mu(k) Gamma_mu of
mutually anticommuting Hermitian matrices, so h(k)^2 = |n(k)|^2.  Models
are stored as coefficient maps k -> n(k) and expanded on demand.

    dirac(m):          n_0 = -(sum_mu cos k_mu - m),  n_mu = sin k_mu
    flattened_dirac:   n_0 = 0,                       n_mu = sin k_mu / |sin k|
    path(lam):         (1 - 2 lam) Gamma_0 + 2 lam h_fD          for lam <= 1/2
                       2 (1 - lam) h_fD + (2 lam - 1) dirac(d-1)  for lam > 1/2
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fitting import DecayFit, decay_fit
from .lattice import LatticeSpec
from .operators import BlockOperator

MODEL_KINDS = ("dirac", "flattened_dirac", "path", "h0", "custom")


class SingularMomentumError(ValueError):
    """The flattened Dirac model is undefined where every sin k_mu vanishes."""


# ---------------------------------------------------------------------------
# Clifford generators
# ---------------------------------------------------------------------------

_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)
_I2 = np.eye(2, dtype=complex)


@dataclass(frozen=True, eq=False)
class CliffordSet:
    """Gamma_0 ... Gamma_d with {Gamma_mu, Gamma_nu} = 2 delta_{mu nu}."""

    d: int
    matrices: tuple[np.ndarray, ...]

    @property
    def size(self) -> int:
        return self.matrices[0].shape[0]

    def stacked(self) -> np.ndarray:
        return np.stack(self.matrices)

    def anticommutator_defect(self) -> float:
        """max |{G_mu, G_nu} - 2 delta_{mu nu}| over all entries and pairs."""
        one = np.eye(self.size)
        worst = 0.0
        for a, A in enumerate(self.matrices):
            for b, B in enumerate(self.matrices):
                worst = max(worst, float(np.max(np.abs(A @ B + B @ A - 2.0 * (a == b) * one))))
        return worst


def clifford(d: int) -> CliffordSet:
    if d == 1:
        mats = (_SZ, _SX)
    elif d == 2:
        mats = (_SZ, _SX, _SY)
    elif d == 3:
        mats = (np.kron(_SZ, _I2),) + tuple(np.kron(_SX, s) for s in (_SX, _SY, _SZ))
    else:
        raise ValueError(f"unsupported dimension d={d}; expected 1, 2 or 3")
    return CliffordSet(d=d, matrices=tuple(m.copy() for m in mats))


# ---------------------------------------------------------------------------
# momentum grids and models
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KGrid:
    """Momenta k_mu = 2 pi (n_mu + 1/2)/L (anti-periodic) or 2 pi n_mu / L (periodic)."""

    L: int
    d: int
    boundary: str = "antiperiodic"
    _momenta: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.boundary not in ("antiperiodic", "periodic"):
            raise ValueError(f"k-grid boundary must be periodic or antiperiodic, got {self.boundary!r}")
        if self.d not in (1, 2, 3) or self.L < 2:
            raise ValueError(f"invalid grid d={self.d}, L={self.L}")

    @property
    def shift(self) -> float:
        return 0.5 if self.boundary == "antiperiodic" else 0.0

    def axis(self) -> np.ndarray:
        return 2.0 * np.pi * (np.arange(self.L) + self.shift) / self.L

    def momenta(self) -> np.ndarray:
        """Grid momenta, shape (L, ..., L, d) in FFT index order."""
        if self._momenta is None:
            k1 = self.axis()
            grid = np.stack(np.meshgrid(*([k1] * self.d), indexing="ij"), axis=-1)
            grid.setflags(write=False)
            object.__setattr__(self, "_momenta", grid)
        return self._momenta

    @property
    def size(self) -> int:
        return self.L**self.d


@dataclass(frozen=True)
class BlochModel:
    """h(k) = sum_mu n_mu(k) Gamma_mu.

    ``mass`` is the Dirac mass m, ``lam`` the path parameter and
    ``coefficients`` a callable k -> n(k) (shape (..., d+1)) for custom models.
    """

    kind: str
    d: int
    mass: float | None = None
    lam: float | None = None
    coefficients: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.kind == "dirac" and self.mass is None:
            raise ValueError("dirac model needs a mass")
        if self.kind == "path" and (self.lam is None or not 0.0 <= self.lam <= 1.0):
            raise ValueError("path model needs lam in [0, 1]")
        if self.kind == "custom" and self.coefficients is None:
            raise ValueError("custom model needs a coefficient function")

    @property
    def clifford(self) -> CliffordSet:
        return clifford(self.d)


def dirac(d: int, m: float) -> BlochModel:
    return BlochModel("dirac", d, mass=float(m))


def flattened_dirac(d: int) -> BlochModel:
    return BlochModel("flattened_dirac", d)


def path_model(d: int, lam: float) -> BlochModel:
    return BlochModel("path", d, lam=float(lam))


def trivial_model(d: int) -> BlochModel:
    """h_0(k) = Gamma_0."""
    return BlochModel("h0", d)


def _dirac_coeffs(k: np.ndarray, m: float) -> np.ndarray:
    return np.concatenate([-(np.cos(k).sum(axis=-1, keepdims=True) - m), np.sin(k)], axis=-1)


def _flat_coeffs(k: np.ndarray) -> np.ndarray:
    s = np.sin(k)
    norm = np.sqrt((s**2).sum(axis=-1, keepdims=True))
    if np.any(norm <= 1e-12):
        raise SingularMomentumError("singular momentum: all sin k_mu vanish for the flattened Dirac model")
    return np.concatenate([np.zeros_like(norm), s / norm], axis=-1)


def _h0_coeffs(k: np.ndarray) -> np.ndarray:
    out = np.zeros(k.shape[:-1] + (k.shape[-1] + 1,))
    out[..., 0] = 1.0
    return out


def bloch_coefficients(model: BlochModel, k) -> np.ndarray:
    """n(k) with shape k.shape[:-1] + (d+1,)."""
    k = np.asarray(k, dtype=float)
    if k.ndim == 0:
        k = k.reshape(1)
    if k.shape[-1] != model.d:
        raise ValueError(f"momentum must have {model.d} components")
    if model.kind == "dirac":
        return _dirac_coeffs(k, model.mass)
    if model.kind == "flattened_dirac":
        return _flat_coeffs(k)
    if model.kind == "h0":
        return _h0_coeffs(k)
    if model.kind == "custom":
        return np.asarray(model.coefficients(k), dtype=float)
    lam = model.lam
    if lam <= 0.5:
        # h_fD is not needed at lam = 0, which keeps that end regular everywhere
        flat = _flat_coeffs(k) if lam > 0 else 0.0
        return (1.0 - 2.0 * lam) * _h0_coeffs(k) + 2.0 * lam * flat
    topo = _dirac_coeffs(k, model.d - 1.0)
    return 2.0 * (1.0 - lam) * _flat_coeffs(k) + (2.0 * lam - 1.0) * topo


def eval_bloch(model: BlochModel, k) -> np.ndarray:
    """h(k), shape k.shape[:-1] + (n, n)."""
    n = bloch_coefficients(model, k)
    return np.tensordot(n, model.clifford.stacked(), axes=([-1], [0]))


# ---------------------------------------------------------------------------
# gap certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GapCertificate:
    min_value: float
    argmin_lambda: float
    argmin_k: tuple[float, ...]
    lambdas: np.ndarray
    per_lambda: np.ndarray

    def passed(self, floor: float = 0.5, tol: float = 1e-9) -> bool:
        return self.min_value >= floor - tol


def min_eigenvalue_squared(model: BlochModel, kgrid: KGrid) -> tuple[float, tuple[float, ...]]:
    k = kgrid.momenta()
    eps = np.linalg.eigvalsh(eval_bloch(model, k))
    sq = np.min(eps**2, axis=-1)
    idx = np.unravel_index(int(np.argmin(sq)), sq.shape)
    return float(sq[idx]), tuple(float(x) for x in k[idx])


def gap_certificate(kgrid: KGrid, lambdas: Sequence[float] | None = None) -> GapCertificate:
    """min over (lam, k) of the smallest squared eigenvalue of h_lam(k)."""
    if kgrid.boundary != "antiperiodic":
        raise ValueError("the gap certificate needs an anti-periodic grid to avoid singular momenta")
    lams = np.linspace(0.0, 1.0, 101) if lambdas is None else np.asarray(lambdas, dtype=float)
    per = np.empty(len(lams))
    ks = []
    for i, lam in enumerate(lams):
        per[i], kmin = min_eigenvalue_squared(path_model(kgrid.d, lam), kgrid)
        ks.append(kmin)
    best = int(np.argmin(per))
    return GapCertificate(
        min_value=float(per[best]),
        argmin_lambda=float(lams[best]),
        argmin_k=ks[best],
        lambdas=lams,
        per_lambda=per,
    )


# ---------------------------------------------------------------------------
# Bloch to real space
# ---------------------------------------------------------------------------


def _to_real_space(values: np.ndarray, kgrid: KGrid) -> np.ndarray:
    """(1/L^d) sum_k e^{ik.x} values(k) for every displacement x in [0, L)^d.

    With k = 2 pi (n + s)/L the sum is an inverse FFT times e^{2 pi i s x / L} per axis.
    """
    axes = tuple(range(kgrid.d))
    out = np.fft.ifftn(values, axes=axes)
    if kgrid.shift:
        x = np.arange(kgrid.L)
        phase1 = np.exp(2j * np.pi * kgrid.shift * x / kgrid.L)
        phase = phase1
        for _ in range(kgrid.d - 1):
            phase = np.multiply.outer(phase, phase1)
        out = out * phase.reshape(phase.shape + (1, 1))
    return out


@dataclass(frozen=True, eq=False)
class RealSpaceBlocks:
    """Translation-invariant blocks B(x) for displacements x = r - r' in [0, L)^d."""

    blocks: np.ndarray
    kgrid: KGrid

    def block(self, displacement: Sequence[int]) -> np.ndarray:
        """B(x) for -L < x_a < L; negative components pick up the twist sign."""
        x = [int(v) for v in np.atleast_1d(displacement)]
        idx = tuple(v % self.kgrid.L for v in x)
        flips = sum(v < 0 for v in x) if self.kgrid.shift else 0
        return self.blocks[idx] * (-1.0) ** flips

    def norms(self) -> np.ndarray:
        """Spectral norm of each block, shape (L,)*d."""
        flat = self.blocks.reshape((-1,) + self.blocks.shape[-2:])
        return np.linalg.svd(flat, compute_uv=False)[:, 0].reshape(self.blocks.shape[:-2])

    def displacements(self) -> np.ndarray:
        """Minimum-image displacement vectors, shape (L^d, d), matching ``norms().ravel()``."""
        L = self.kgrid.L
        x = np.arange(L)
        x = np.where(x > L // 2, x - L, x)
        grid = np.stack(np.meshgrid(*([x] * self.kgrid.d), indexing="ij"), axis=-1)
        return grid.reshape(-1, self.kgrid.d)


def ground_state_projector(model: BlochModel, kgrid: KGrid) -> np.ndarray:
    """(1 - sgn h(k))/2 on every grid momentum, by per-k diagonalization."""
    h = eval_bloch(model, kgrid.momenta())
    w, v = np.linalg.eigh(h)
    if np.min(np.abs(w)) <= 1e-10:
        raise ValueError("gapless momentum on the grid: Fermi level inside band")
    occ = (w < 0).astype(float)
    return np.einsum("...ij,...j,...kj->...ik", v, occ, v.conj())


def bloch_covariance(model: BlochModel, kgrid: KGrid) -> RealSpaceBlocks:
    """C(x) = (1/L^d) sum_k e^{ik.x} (1 - sgn h(k))/2."""
    return RealSpaceBlocks(_to_real_space(ground_state_projector(model, kgrid), kgrid), kgrid)


def real_space_hopping(model: BlochModel, kgrid: KGrid) -> RealSpaceBlocks:
    """h(x) = (1/L^d) sum_k e^{ik.x} h(k)."""
    return RealSpaceBlocks(_to_real_space(eval_bloch(model, kgrid.momenta()), kgrid), kgrid)


def assemble_operator(blocks: RealSpaceBlocks) -> BlockOperator:
    """Dense L^d x L^d block matrix M_{r r'} = B(r - r') on the twisted lattice."""
    kg = blocks.kgrid
    spec = LatticeSpec(kg.d, kg.L, kg.boundary, internal_dim=blocks.blocks.shape[-1])
    sites = spec.sites()
    raw = sites[:, None, :] - sites[None, :, :]
    idx = tuple(raw[..., a] % kg.L for a in range(kg.d))
    big = blocks.blocks[idx]  # (N, N, n, n)
    if kg.shift:
        # B(x - L) = -B(x): each axis with r_a < r'_a wraps once through the twisted boundary
        flips = np.sum(raw < 0, axis=-1)
        big = big * np.where(flips % 2 == 1, -1.0, 1.0)[..., None, None]
    data = big.transpose(0, 2, 1, 3).reshape(spec.dim, spec.dim)
    return BlockOperator(data, spec)


def real_space_hopping_decay(
    model: BlochModel,
    kgrid: KGrid,
    window: tuple[float, float] | None = None,
    selection: str = "odd_x_axis",
    min_points: int = 5,
) -> DecayFit:
    """Power-law fit of ||h(x)|| over the default window [L/20, L/4]."""
    blocks = real_space_hopping(model, kgrid)
    window = window or (kgrid.L / 20.0, kgrid.L / 4.0)
    return decay_fit(blocks.displacements(), blocks.norms().ravel(), selection=selection, window=window, min_points=min_points)


def covariance_decay(
    model: BlochModel,
    kgrid: KGrid,
    window: tuple[float, float] | None = None,
    selection: str = "odd_x_axis",
    min_points: int = 5,
) -> tuple[DecayFit, RealSpaceBlocks]:
    """Power-law fit of ||C(x)|| on the odd x-axis in the window [L/20, L/4]."""
    cov = bloch_covariance(model, kgrid)
    window = window or (kgrid.L / 20.0, kgrid.L / 4.0)
    fit = decay_fit(cov.displacements(), cov.norms().ravel(), selection=selection, window=window, min_points=min_points)
    return fit, cov
