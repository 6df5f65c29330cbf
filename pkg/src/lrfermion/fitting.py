"""Log-log power-law fits of block-norm decay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import stats

SELECTIONS = ("all", "odd_x_axis")
# rms of log-residuals above which a power law is a poor description
POWER_LAW_RESIDUAL = 0.05


class InsufficientDataError(ValueError):
    """Raised when the fit window holds too few separations."""


@dataclass(frozen=True)
class DecayFit:
    separations: np.ndarray
    norms: np.ndarray
    slope: float
    intercept: float
    residual_rms: float
    window: tuple[float, float]
    slope_ci: float
    selection: str = "all"

    @property
    def power_law_like(self) -> bool:
        return self.residual_rms <= POWER_LAW_RESIDUAL

    def predict(self, r):
        return np.exp(self.intercept) * np.asarray(r, dtype=float) ** self.slope

    def summary(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_ci": self.slope_ci,
            "residual": self.residual_rms,
            "window": list(self.window),
            "points": int(len(self.separations)),
            "selection": self.selection,
        }


def _select(displacements: np.ndarray, selection: str) -> tuple[np.ndarray, np.ndarray]:
    """(mask, distance) for the requested subset of displacement vectors."""
    disp = np.asarray(displacements, dtype=float)
    if disp.ndim == 1:
        disp = disp[:, None]
    dist = np.sqrt((disp**2).sum(axis=1))
    if selection == "all":
        return np.ones(len(dist), dtype=bool), dist
    if selection == "odd_x_axis":
        on_axis = np.all(disp[:, 1:] == 0, axis=1)
        x = np.abs(disp[:, 0])
        return on_axis & (np.mod(x, 2) == 1), dist
    raise ValueError(f"unknown selection {selection!r}")


def decay_fit(
    blocks: Mapping | np.ndarray,
    norms: np.ndarray | None = None,
    selection: str = "all",
    window: tuple[float, float] = (1.0, np.inf),
    min_points: int = 5,
) -> DecayFit:
    """Least-squares fit of log(norm) against log(separation).

    ``blocks`` is either a mapping from displacement (scalar or d-tuple) to
    block norm, or an array of displacements with ``norms`` alongside.
    ``odd_x_axis`` keeps displacements (x, 0, ..., 0) with odd x.
    ``min_points`` counts distinct separations, so +x and -x count once.
    """
    if isinstance(blocks, Mapping):
        keys = list(blocks)
        disp = np.array([np.atleast_1d(k) for k in keys], dtype=float)
        vals = np.array([blocks[k] for k in keys], dtype=float)
    else:
        disp = np.asarray(blocks, dtype=float)
        vals = np.asarray(norms, dtype=float)
    mask, dist = _select(disp, selection)
    lo, hi = window
    mask &= (dist >= lo) & (dist <= hi) & (vals > 0) & (dist > 0)
    distinct = len(np.unique(dist[mask]))
    if distinct < max(min_points, 2):
        raise InsufficientDataError(
            f"need at least {min_points} distinct separations in window [{lo}, {hi}] ({selection}), got {distinct}"
        )
    r, n = dist[mask], vals[mask]
    order = np.lexsort((n, r))
    r, n = r[order], n[order]
    x, y = np.log(r), np.log(n)
    res = stats.linregress(x, y)
    resid = y - (res.intercept + res.slope * x)
    dof = len(x) - 2
    ci = float(stats.t.ppf(0.975, dof) * res.stderr) if dof > 0 else float("inf")
    return DecayFit(
        separations=r,
        norms=n,
        slope=float(res.slope),
        intercept=float(res.intercept),
        residual_rms=float(np.sqrt(np.mean(resid**2))),
        window=(float(lo), float(hi)),
        slope_ci=ci,
        selection=selection,
    )
