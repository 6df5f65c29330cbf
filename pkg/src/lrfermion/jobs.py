"""Job runners: one function per job kind, each filling a :class:`JobReport`.

Every randomized choice is drawn from generators spawned from the job seed,
so the same config and seed reproduce the same metrics and tables.
"""

from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from .config import FIG2_MIN_POINTS, FIG2_SIDES, FIG2_SLOPE_TOL, ConfigError, JobConfig, build_model, model_spec
from .dynamics import (
    EnvelopeDomainError,
    SpectralCache,
    all_pairs,
    hermitian_eigh,
    reference_pairs,
    spectral_decompose,
    verify_lr_bound,
)
from .filters import filter_fourier_check, green_filter_monotone
from .fitting import InsufficientDataError
from .lattice import DenseCapError, LatticeSpec, UnboundedRegimeError, check_lattice_sum_bounds, coarse_grain, geometry_constants
from .operators import (
    certify_alpha_decay,
    check_coarse_block_bound,
    damp_exponential,
    holder_bound,
    kitaev_chain,
    nearest_neighbor_chain,
    random_power_law_model,
    split_range,
    staggered_chain,
)
from .report import JobReport, Rule, Table
from .spectral import (
    GaplessError,
    NoBoundStateError,
    ResolventSingularError,
    bound_state,
    clustering_envelope,
    covariance,
    green_blocks,
    reconstruct_sign_via_filter,
    verify_clustering,
)
from .topo import KGrid, covariance_decay, gap_certificate, path_model

# failures that end a job with a named reason instead of a traceback
NUMERIC_ERRORS = (
    GaplessError,
    NoBoundStateError,
    ResolventSingularError,
    EnvelopeDomainError,
    InsufficientDataError,
    UnboundedRegimeError,
    DenseCapError,
    np.linalg.LinAlgError,
    FloatingPointError,
)


class JobFailure(RuntimeError):
    """Numerical failure attributed to one metric."""

    def __init__(self, metric: str, cause: Exception):
        self.metric = metric
        super().__init__(f"{metric}: {type(cause).__name__}: {cause}")


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *stream]))


def _metric(name: str, fn: Callable, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except NUMERIC_ERRORS as exc:
        raise JobFailure(name, exc) from exc


def _as_window(value, default):
    if value is None:
        return default
    lo, hi = value
    return float(lo), float(hi)


# ---------------------------------------------------------------------------
# verify-lr
# ---------------------------------------------------------------------------


def _lr_model(cfg: JobConfig):
    m = cfg.model
    name = cfg.params["model"]
    alpha, J, L = float(m["alpha"]), float(m["J"]), int(m["side"])
    if name == "random":
        spec = model_spec(m)
        return random_power_law_model(spec, J, alpha, _rng(cfg.seed, 0))
    if name == "power_law":
        return build_model(m)
    if name == "nearest_neighbor":
        return nearest_neighbor_chain(L, J, boundary=m["boundary"])
    if name == "kitaev":
        return kitaev_chain(L, J, J, float(cfg.params["mu"]), alpha, m["boundary"])
    raise ConfigError(f"unknown verify-lr model {name!r}; expected random, power_law, nearest_neighbor or kitaev", key="model")


def run_verify_lr(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    H = _lr_model(cfg)
    alpha = float(cfg.model["alpha"])
    if alpha <= H.spec.d:
        raise JobFailure("t_c", EnvelopeDomainError(f"alpha={alpha} must exceed d={H.spec.d}"))
    cert = certify_alpha_decay(H, alpha)
    constants = geometry_constants(H.spec, alpha, cert.J)
    t_c = max(constants.t_c, 0.0)
    p = cfg.params
    if p["times"] is not None:
        times = sorted(float(t) for t in p["times"])
    else:
        t_max = float(p["t_max"])
        if t_max <= t_c:
            raise ConfigError(f"t_max={t_max} must exceed t_c={t_c:.6g}", key="t_max")
        # uniform on (t_c, t_max]
        times = sorted(t_max - _rng(cfg.seed, 1).uniform(0.0, t_max - t_c, size=int(p["n_times"])))
    pairs = all_pairs(H.spec) if p["pairs"] == "all" else reference_pairs(H.spec, int(p["pairs"]) if p["pairs"] != "reference" else 0)
    lr = _metric("max_ratio", verify_lr_bound, H, cert, times, pairs, constants=constants, threads=threads)

    report.metrics.update(
        {
            "J_certified": cert.J,
            "t_c": constants.t_c,
            "times": [float(t) for t in times],
            "n_pairs": int(len(pairs)),
            "max_ratio": lr.max_ratio,
            "violations": len(lr.violations),
        }
    )
    report.rules.append(Rule("max_ratio", lr.max_ratio, "<=", 1.0 + tol["ratio_slack"]))
    report.tables["verify_lr"] = Table(("t", "distance", "measured_norm", "envelope", "ratio"), lr.max_by_distance())


# ---------------------------------------------------------------------------
# clustering
# ---------------------------------------------------------------------------


def run_clustering(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    m, p = cfg.model, cfg.params
    if m["dimension"] != 1:
        raise ConfigError("clustering runs on the one-dimensional reference chain", key="dimension")
    L, alpha, J = int(m["side"]), float(m["alpha"]), float(m["J"])
    H = staggered_chain(L, J, alpha, float(p["mu"]), m["boundary"])
    ref = int(p["reference"]) if p["reference"] is not None else L // 2
    window = _as_window(p["window"], (L / 20.0, L / 4.0))
    cache = spectral_decompose(H)
    gap = _metric("gap", cache.gap)
    cert = certify_alpha_decay(H, alpha)
    constants = geometry_constants(H.spec, alpha, cert.J)
    pairs = reference_pairs(H.spec, ref)

    cov = _metric("covariance_slope", covariance, cache)
    cov_env = clustering_envelope("covariance", constants, gap)
    cov_rep = _metric("covariance_slope", verify_clustering, cov, cov_env, pairs, window)

    z = complex(p["z"])
    green = _metric("green_slope", green_blocks, cache, z, pairs)
    dz = float(np.min(np.abs(cache.eigenvalues - z)))
    green_env = clustering_envelope("green", constants, dz, abs(z.imag))
    green_rep = _metric("green_slope", verify_clustering, green, green_env, None, window)

    report.metrics.update(
        {
            "gap": gap,
            "J_certified": cert.J,
            "reference": ref,
            "covariance": cov_rep.fit.summary(),
            "covariance_max_ratio": cov_rep.max_ratio,
            "green": green_rep.fit.summary(),
            "green_max_ratio": green_rep.max_ratio,
            "green_distance_to_spectrum": dz,
        }
    )
    slack = 1.0 + tol["ratio_slack"]
    report.rules += [
        Rule("covariance_slope", cov_rep.fit.slope, "within", [-alpha, tol["covariance_slope"]]),
        Rule("green_slope", green_rep.fit.slope, "<=", tol["green_slope_max"]),
        Rule("covariance_max_ratio", cov_rep.max_ratio, "<=", slack),
        Rule("green_max_ratio", green_rep.max_ratio, "<=", slack),
    ]
    header = ("distance", "block_norm", "envelope", "ratio")
    for name, rep in (("clustering_covariance", cov_rep), ("clustering_green", green_rep)):
        order = np.argsort(rep.distance, kind="stable")
        rows = [tuple(float(x) for x in row) for row in zip(rep.distance[order], rep.norms[order], rep.envelope[order], rep.ratio[order])]
        report.tables[name] = Table(header, rows)


# ---------------------------------------------------------------------------
# bound-state
# ---------------------------------------------------------------------------


def run_bound_state(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    m, p = cfg.model, cfg.params
    if m["dimension"] != 1:
        raise ConfigError("bound-state runs on a one-dimensional chain", key="dimension")
    window = _as_window(p["window"], (50.0, 500.0))
    site, V = int(p["site"]), float(p["V"]) * float(m["J"])
    per_alpha = {}
    for alpha in p["alphas"]:
        alpha = float(alpha)
        tag = f"alpha={alpha:g}"
        cfg_model = dict(m, alpha=alpha, impurities=[])
        H0 = build_model(cfg_model)
        H = build_model(dict(cfg_model, impurities=[[site, V]]))
        clean = spectral_decompose(H0)
        bs = _metric(f"bound_state[{tag}]", bound_state, H, clean, window)
        per_alpha[tag] = {
            "alpha": alpha,
            "energy": bs.energy,
            "band": list(bs.band),
            "residual": bs.residual,
            "slope": bs.fit.slope,
            "fit": bs.fit.summary(),
        }
        report.rules += [
            Rule(f"residual[{tag}]", bs.residual, "<=", tol["residual"]),
            Rule(f"slope[{tag}]", bs.fit.slope, "within", [-alpha, tol["slope"]]),
        ]
        report.tables[f"bound_state_alpha{alpha:g}"] = Table(
            ("site", "distance", "abs_psi"), [(s, float(d), float(a)) for s, (d, a) in enumerate(zip(bs.distances, bs.amplitudes))]
        )
    report.metrics["bound_states"] = per_alpha


# ---------------------------------------------------------------------------
# gap-scan
# ---------------------------------------------------------------------------


def run_gap_scan(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    p = cfg.params
    dims, sides = list(p["dimensions"]), list(p["sides"])
    if len(dims) != len(sides):
        raise ConfigError("dimensions and sides must have the same length", key="sides")
    lams = np.linspace(0.0, 1.0, int(p["lambda_points"]))
    quarter = int(np.argmin(np.abs(lams - 0.25)))
    rows, per_d = [], {}
    for d, L in zip(dims, sides):
        cert = _metric(f"min_eig_sq[d={d}]", gap_certificate, KGrid(int(L), int(d), "antiperiodic"), lams)
        per_d[f"d={d}"] = {
            "L": int(L),
            "min_eig_sq": cert.min_value,
            "argmin_lambda": cert.argmin_lambda,
            "at_quarter": float(cert.per_lambda[quarter]),
        }
        rows += [(int(d), float(lam), float(v)) for lam, v in zip(cert.lambdas, cert.per_lambda)]
        report.rules += [
            Rule(f"floor[d={d}]", cert.min_value, ">=", 0.5 - tol["floor_slack"]),
            Rule(f"quarter[d={d}]", float(cert.per_lambda[quarter]), "within", [0.5, tol["quarter_match"]]),
        ]
    report.metrics["gap_scan"] = per_d
    report.tables["gap_scan"] = Table(("d", "lambda", "min_eig_sq"), rows)


# ---------------------------------------------------------------------------
# fig2
# ---------------------------------------------------------------------------


def run_fig2(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    m, p = cfg.model, cfg.params
    d = int(m["dimension"])
    L = int(m["side"]) if m["side"] is not None else FIG2_SIDES[d]
    if m["boundary"] != "antiperiodic":
        raise ConfigError("fig2 needs an anti-periodic momentum grid", key="boundary")
    window = _as_window(p["window"], (L / 20.0, L / 4.0))
    min_points = int(p["min_points"]) if p["min_points"] is not None else FIG2_MIN_POINTS[d]
    slope_tol = float(tol["slope"]) if tol["slope"] is not None else FIG2_SLOPE_TOL[d]
    kgrid = KGrid(L, d, "antiperiodic")
    fits, rows = [], []
    for lam in p["lambdas"]:
        lam = float(lam)
        fit, cov = _metric(f"slope[lambda={lam:g}]", covariance_decay, path_model(d, lam), kgrid, window, "odd_x_axis", min_points)
        disp = cov.displacements()
        norms = cov.norms().ravel()
        on_axis = np.all(disp[:, 1:] == 0, axis=1) & (disp[:, 0] > 0)
        for x, n in sorted(zip(disp[on_axis, 0].tolist(), norms[on_axis].tolist())):
            rows.append((lam, int(x), float(n)))
        fits.append({"d": d, "L": L, "lambda": lam, "slope": fit.slope, "slope_ci": fit.slope_ci, "residual": fit.residual_rms})
        report.rules.append(Rule(f"slope[lambda={lam:g}]", fit.slope, "within", [-float(d), slope_tol]))
    report.metrics.update({"fits": fits, "window": list(window), "min_points": min_points, "L": L})
    report.tables["fig2"] = Table(("lambda", "separation", "norm"), rows)


# ---------------------------------------------------------------------------
# filter-check
# ---------------------------------------------------------------------------


def _random_gapped_instance(rng: np.random.Generator) -> tuple[np.ndarray, float, float]:
    """Random Hermitian matrix with spectrum outside (-gap, gap) and a filter width sigma <= gap."""
    n = int(rng.integers(6, 25))
    gap = float(rng.uniform(0.2, 1.0))
    eps = rng.uniform(gap, 3.0, size=n) * rng.choice([-1.0, 1.0], size=n)
    eps[0] = gap * rng.choice([-1.0, 1.0])
    q, _ = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    H = (q * eps) @ q.conj().T
    sigma = float(rng.uniform(0.25, 1.0)) * gap
    return (H + H.conj().T) / 2, gap, sigma


def run_filter_check(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    p = cfg.params
    rows = []
    rng = _rng(cfg.seed, 10)
    erf_res = []
    for _ in range(int(p["erf_samples"])):
        sigma, omega = float(rng.uniform(0.1, 2.0)), float(rng.uniform(-5.0, 5.0))
        r = _metric("erf_fourier", filter_fourier_check, "erf_sign", sigma, omega)
        erf_res.append(r)
        rows.append(("erf_fourier", sigma, 0.0, 0.0, omega, r, tol["fourier"]))
    rng = _rng(cfg.seed, 11)
    green_res = []
    for _ in range(int(p["green_samples"])):
        sigma, omega = float(rng.uniform(0.1, 2.0)), float(rng.uniform(-5.0, 5.0))
        z = complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))
        r = _metric("green_fourier", filter_fourier_check, "green", sigma, omega, z)
        green_res.append(r)
        rows.append(("green_fourier", sigma, z.real, z.imag, omega, r, tol["fourier"]))
    rng = _rng(cfg.seed, 12)
    monotone = []
    for _ in range(int(p["monotone_grids"])):
        sigma = float(rng.uniform(0.1, 2.0))
        z = complex(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))
        ok = green_filter_monotone(sigma, z)
        monotone.append(ok)
        rows.append(("green_monotone", sigma, z.real, z.imag, 0.0, float(ok), 1.0))
    rng = _rng(cfg.seed, 13)
    sign_excess = []
    for _ in range(int(p["sign_instances"])):
        H, gap, sigma = _random_gapped_instance(rng)
        spec = LatticeSpec(1, len(H), "open")
        eps, U = hermitian_eigh(H)
        cache = SpectralCache(eps, U, "", spec, matrix=H)
        rec = _metric("sign_error", reconstruct_sign_via_filter, cache, sigma, quad_tol=tol["sign_slack"])
        sign_excess.append(rec.error - rec.bound)
        rows.append(("sign_error", sigma, gap, 0.0, 0.0, rec.error, rec.bound))

    report.metrics.update(
        {
            "erf_fourier_max": max(erf_res, default=0.0),
            "green_fourier_max": max(green_res, default=0.0),
            "monotone_failures": int(len(monotone) - sum(monotone)),
            "sign_error_excess_max": max(sign_excess, default=-math.inf),
        }
    )
    report.rules += [
        Rule("erf_fourier_max", report.metrics["erf_fourier_max"], "<=", tol["fourier"]),
        Rule("green_fourier_max", report.metrics["green_fourier_max"], "<=", tol["fourier"]),
        Rule("monotone_failures", report.metrics["monotone_failures"], "<=", 0),
        Rule("sign_error_excess_max", report.metrics["sign_error_excess_max"], "<=", 0.0),
    ]
    # for sign rows the z_re column carries the gap and "bound" the analytic bound
    report.tables["filter_check"] = Table(("check", "sigma", "z_re", "z_im", "omega", "value", "bound"), rows)


# ---------------------------------------------------------------------------
# lemma-suite
# ---------------------------------------------------------------------------

# (d, L, alpha, chi) for the coarse-grained checks; open boundaries
COARSE_INSTANCES = ((1, 120, 2.5, 4), (1, 96, 2.2, 3), (1, 120, 3.0, 8), (2, 12, 3.5, 2), (2, 12, 3.2, 3))
# (d, L, alpha) for the lattice-sum inequalities
SUM_INSTANCES = ((1, 1001, 2.5), (2, 41, 3.5))
# (d, L, alpha) for the Hoelder continuity check
HOLDER_INSTANCES = ((1, 64, 2.5), (2, 8, 3.5))
LEMMA_CHECKS = ("lemma1", "lemma2", "prop1", "prop2", "holder")
LEMMA2_T_MAX = 3.0


def _coarse_instances(seed: int):
    out = []
    for i, (d, L, alpha, chi) in enumerate(COARSE_INSTANCES):
        spec = LatticeSpec(d, L, "open")
        H = random_power_law_model(spec, 1.0, alpha, _rng(seed, 100, i))
        grain = coarse_grain(spec, chi)
        cert = certify_alpha_decay(H, alpha)
        constants = geometry_constants(spec, alpha, cert.J, grain)
        out.append((split_range(H, chi), grain, constants))
    return out


def lemma_suite(seed: int, trials: int = 1000) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Randomized ratios (measured / bound) for each check, with the instance index per trial."""
    results: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    coarse = _coarse_instances(seed)

    # long-range part of H on coarse blocks
    tables = [check_coarse_block_bound(split, grain, c) for split, grain, c in coarse]
    rng = _rng(seed, 201)
    inst = rng.integers(len(coarse), size=trials)
    ratios = np.array([tables[i].ratios[rng.integers(len(tables[i].ratios))] for i in inst])
    results["lemma1"] = (ratios, inst)

    # short-range propagator on coarse blocks
    caches = [spectral_decompose(split.short_range, keep_matrix=False) for split, _, _ in coarse]
    rng = _rng(seed, 202)
    inst = rng.integers(len(coarse), size=trials)
    ratios = np.empty(trials)
    for n, i in enumerate(inst):
        _, grain, c = coarse[i]
        cells = grain.bulk_cells()
        a, b = (cells[j] for j in rng.integers(len(cells), size=2))
        t = float(rng.uniform(0.0, LEMMA2_T_MAX))
        k = grain.spec.internal_dim
        cache = caches[i]
        rows = cache.rows(grain.cells[a], np.exp(-1j * cache.eigenvalues * t))
        cols = (grain.cells[b][:, None] * k + np.arange(k)).reshape(-1)
        measured = np.linalg.norm(rows[:, cols], 2)
        bound = min(c.C2 * math.exp(c.v * t - grain.coarse_distance(a, b)), 1.0)
        ratios[n] = measured / bound
    results["lemma2"] = (ratios, inst)

    # lattice-sum inequalities, trials split evenly over the instances
    for check, mode, stream in (("prop1", "convolution", 203), ("prop2", "reproducibility", 204)):
        rng = _rng(seed, stream)
        parts, insts = [], []
        for i, (d, L, alpha) in enumerate(SUM_INSTANCES):
            n = trials // len(SUM_INSTANCES) + (1 if i < trials % len(SUM_INSTANCES) else 0)
            spec = LatticeSpec(d, L, "open")
            constants = geometry_constants(spec, alpha, 1.0)
            rep = check_lattice_sum_bounds(spec, alpha, constants, mode, trials=n, seed=int(rng.integers(2**32)))
            parts.append(rep.ratios)
            insts.append(np.full(n, i))
        results[check] = (np.concatenate(parts), np.concatenate(insts))

    # Hoelder continuity of kappa -> H_kappa
    models = []
    for i, (d, L, alpha) in enumerate(HOLDER_INSTANCES):
        spec = LatticeSpec(d, L, "open")
        H = random_power_law_model(spec, 1.0, alpha, _rng(seed, 300, i))
        models.append((H, geometry_constants(spec, alpha, certify_alpha_decay(H, alpha).J)))
    rng = _rng(seed, 205)
    inst = rng.integers(len(models), size=trials)
    ratios = np.empty(trials)
    for n, i in enumerate(inst):
        H, c = models[i]
        ka, kb = rng.uniform(0.0, 2.0, size=2)
        diff = damp_exponential(H, float(ka)).data - damp_exponential(H, float(kb)).data
        bound = holder_bound(float(ka), float(kb), c)
        ratios[n] = np.linalg.norm(diff, 2) / bound if bound > 0 else 0.0
    results["holder"] = (ratios, inst)
    return results


def run_lemma_suite(cfg: JobConfig, tol: dict, report: JobReport, threads: int) -> None:
    trials = int(cfg.params["trials"])
    if trials < 1:
        raise ConfigError("trials must be >= 1", key="trials")
    results = _metric("lemma_suite", lemma_suite, cfg.seed, trials)
    rows = []
    limit = 1.0 + tol["ratio_slack"]
    for check in LEMMA_CHECKS:
        ratios, inst = results[check]
        worst = float(np.max(ratios))
        report.metrics[check] = {"trials": int(len(ratios)), "worst_ratio": worst, "violations": int(np.sum(ratios > limit))}
        report.rules.append(Rule(f"{check}_worst_ratio", worst, "<=", limit))
        rows += [(check, n, int(i), float(r)) for n, (i, r) in enumerate(zip(inst, ratios))]
    report.tables["lemma_suite"] = Table(("check", "trial", "instance", "ratio"), rows)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

RUNNERS: dict[str, Callable[[JobConfig, dict, JobReport, int], None]] = {
    "verify-lr": run_verify_lr,
    "clustering": run_clustering,
    "bound-state": run_bound_state,
    "gap-scan": run_gap_scan,
    "fig2": run_fig2,
    "filter-check": run_filter_check,
    "lemma-suite": run_lemma_suite,
}


def run_job(cfg: JobConfig, threads: int = 1, tolerance_scale: float = 1.0) -> JobReport:
    """Run one job.  Config problems raise :class:`ConfigError`; numerical
    failures end up in ``report.reason`` with the failing metric named."""
    if threads < 1:
        raise ConfigError("threads must be >= 1", key="threads")
    if not tolerance_scale > 0:
        raise ConfigError("tolerance scale must be > 0", key="tolerance-scale")
    tol = cfg.scaled_tolerances(tolerance_scale)
    report = JobReport(kind=cfg.kind, inputs=cfg.echo(), seed=cfg.seed, tolerances=tol)
    start = time.perf_counter()
    try:
        RUNNERS[cfg.kind](cfg, tol, report, threads)
    except JobFailure as exc:
        report.reason = str(exc)
    except NUMERIC_ERRORS as exc:
        report.reason = f"{cfg.kind}: {type(exc).__name__}: {exc}"
    report.wall_time = time.perf_counter() - start
    return report.finalize()
