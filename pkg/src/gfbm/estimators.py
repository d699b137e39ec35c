"""Monte Carlo and path-functional checks of the gfBm's stated properties.

Each ``*_scan`` / ``*_check`` / ``verify_*`` function returns a
:class:`VerificationReport`; the remaining functions are the estimators the
reports are built from.  Nothing here mutates an ensemble.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError, GridError, ParamsMismatchError
from .kernel import (
    GfbmParams,
    covariance,
    increment_bounds,
    increment_density,
    increment_second_moment,
    markov_residual,
    r_z,
    variance,
)
from .samplers import Method, PathEnsemble, SampleSpec, TimeGrid, sample_circulant

__all__ = [
    "VerificationReport",
    "to_jsonable",
    "LocalTimeEstimate",
    "LrdClassification",
    "empirical_covariance",
    "covariance_discrepancy_scan",
    "cross_method_scan",
    "verify_increment_bounds",
    "markov_scan",
    "lrd_partial_sums",
    "classify_lrd",
    "lrd_check",
    "hurst_per_path",
    "hurst_estimate",
    "hurst_check",
    "difference_quotient_sup",
    "difference_quotient_trend",
    "occupation_local_time",
    "local_time_l2_stability",
    "density_double_integral",
    "density_double_integral_extrapolated",
    "self_similarity_check",
    "rz_asymptotic_check",
]

Z_THRESHOLD = 5.0
LRD_SLOPE_TOLERANCE = 0.05
LRD_TAIL_TOLERANCE = 1e-8
MARKOV_NULL_TOLERANCE = 1e-10
MARKOV_WITNESS_THRESHOLD = 1e-6
BOUND_TOLERANCE = 1e-10
MARKOV_FAMILY = (4.0, 16.0, 64.0)


@dataclass
class VerificationReport:
    name: str
    statistic: float
    threshold: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": "1",
            "name": self.name,
            "passed": bool(self.passed),
            "statistic": to_jsonable(self.statistic),
            "threshold": to_jsonable(self.threshold),
            "details": to_jsonable(self.details),
        }


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def _probe_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


# ---------------------------------------------------------------------------
# Covariance agreement
# ---------------------------------------------------------------------------

def empirical_covariance(ensemble: PathEnsemble, i: int, j: int) -> tuple[float, float]:
    """Mean of ``Z_{t_i} Z_{t_j}`` over paths and its standard error.

    The process is centered, so no sample mean is subtracted.
    """
    size = len(ensemble.grid)
    for idx in (i, j):
        if not 0 <= idx < size:
            raise IndexError(f"grid index {idx} out of range for a grid of {size} points")
    prod = ensemble.values[:, i] * ensemble.values[:, j]
    n = prod.size
    se = float(prod.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(prod.mean()), se


def _moment_matrices(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = values.shape[0]
    mean = values.T @ values / n
    sq = (values**2).T @ (values**2) / n
    var = np.maximum(sq - mean**2, 0.0) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


def covariance_discrepancy_scan(
    ensemble: PathEnsemble,
    params: GfbmParams | None = None,
    allow_mismatch: bool = False,
    threshold: float = Z_THRESHOLD,
) -> VerificationReport:
    """Max ``|empirical - analytic| / SE`` over grid pairs with positive times.

    ``params`` defaults to the ensemble's own.  Passing different parameters
    raises unless ``allow_mismatch`` is set (negative controls).
    """
    params = ensemble.params if params is None else params
    if params != ensemble.params and not allow_mismatch:
        raise ParamsMismatchError(
            f"analytic parameters {params.as_dict()} differ from the ensemble's {ensemble.params.as_dict()}"
        )
    pts = ensemble.grid.points[1:]
    details = {
        "n_paths": ensemble.n_paths,
        "grid_points": len(ensemble.grid),
        "seed": ensemble.spec.seed,
        "method": ensemble.spec.method.value,
        "analytic_params": params.as_dict(),
        "ensemble_params": ensemble.params.as_dict(),
    }
    if pts.size == 0:
        details["comparisons"] = 0
        return VerificationReport("covariance_discrepancy", 0.0, threshold, True, details)
    mean, se = _moment_matrices(ensemble.values[:, 1:])
    exact = np.asarray(covariance(params, pts[:, None], pts[None, :])).reshape(mean.shape)
    iu = np.triu_indices(pts.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(mean[iu] - exact[iu]) / se[iu]
    z = z[np.isfinite(z)]
    stat = float(z.max()) if z.size else 0.0
    details.update(comparisons=int(z.size), mean_abs_z=float(z.mean()) if z.size else 0.0)
    return VerificationReport("covariance_discrepancy", stat, threshold, stat < threshold, details)


def cross_method_scan(
    first: PathEnsemble, second: PathEnsemble, threshold: float = Z_THRESHOLD
) -> VerificationReport:
    """Two-sample z-scores of per-entry second moments for two ensembles."""
    if first.grid != second.grid:
        raise GridError("cross-method comparison needs ensembles on the same grid")
    m1, se1 = _moment_matrices(first.values[:, 1:])
    m2, se2 = _moment_matrices(second.values[:, 1:])
    iu = np.triu_indices(m1.shape[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.abs(m1[iu] - m2[iu]) / np.sqrt(se1[iu] ** 2 + se2[iu] ** 2)
    z = z[np.isfinite(z)]
    stat = float(z.max()) if z.size else 0.0
    details = {
        "methods": [first.spec.method.value, second.spec.method.value],
        "seeds": [first.spec.seed, second.spec.seed],
        "n_paths": [first.n_paths, second.n_paths],
        "comparisons": int(z.size),
    }
    return VerificationReport("cross_method", stat, threshold, stat < threshold, details)


# ---------------------------------------------------------------------------
# Increment bounds
# ---------------------------------------------------------------------------

def _bound_pairs(rng: np.random.Generator, n_pairs: int) -> tuple[np.ndarray, np.ndarray]:
    # s/(t-s) log-uniform over 43 decades reaches both limits of the ratio
    ratio = 10.0 ** rng.uniform(-30, 13, n_pairs)
    t = 10.0 ** rng.uniform(-3, 1, n_pairs)
    s = t * (ratio / (1.0 + ratio))
    keep = s < t
    return s[keep], t[keep]


def verify_increment_bounds(params: GfbmParams, n_pairs: int, seed: int) -> VerificationReport:
    """Scan ``E(Z_t-Z_s)^2 / (t-s)^{2H}`` against the sharp constants.

    ``far`` pairs (``s << t - s``) approach ``a^2+b^2-2ab(2^{2H-1}-1)``,
    ``near`` pairs (``t - s << s``) approach ``a^2+b^2``; which of the two is
    the lower constant depends on the regime.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be positive")
    bounds = increment_bounds(params)
    s, t = _bound_pairs(_probe_rng(seed), n_pairs)
    gap = t - s
    ratio = np.asarray(increment_second_moment(params, s, t)) / gap ** params.alpha
    low = ratio < bounds.gamma * (1 - BOUND_TOLERANCE)
    high = ratio > bounds.nu * (1 + BOUND_TOLERANCE)
    violations = int(np.count_nonzero(low | high))
    a, b, H = params.a, params.b, params.hurst
    rel = s / gap
    far, near = rel < 1e-3, rel > 1e3
    far_limit = a * a + b * b - 2 * a * b * (2 ** (2 * H - 1) - 1)
    near_limit = a * a + b * b
    details = {
        "seed": seed,
        "n_pairs": int(s.size),
        "regime": bounds.regime.value,
        "gamma": bounds.gamma,
        "nu": bounds.nu,
        "violations": violations,
        "ratio_min": float(ratio.min()),
        "ratio_max": float(ratio.max()),
        "lower_sharpness": abs(float(ratio.min()) / bounds.gamma - 1),
        "upper_sharpness": abs(float(ratio.max()) / bounds.nu - 1),
        "far_pairs": int(far.sum()),
        "near_pairs": int(near.sum()),
        "far_limit": far_limit,
        "near_limit": near_limit,
        "far_ratio_extreme": float(ratio[np.argmin(rel)]),
        "near_ratio_extreme": float(ratio[np.argmax(rel)]),
        "tolerance": BOUND_TOLERANCE,
    }
    return VerificationReport("increment_bounds", float(violations), 0.0, violations == 0, details)


# ---------------------------------------------------------------------------
# Markov property
# ---------------------------------------------------------------------------

def markov_scan(params: GfbmParams, n_triples: int, seed: int) -> VerificationReport:
    """Normalized Markov residuals on random triples and on ``(sqrt(t), t, t^2)``.

    At ``H = 1/2`` the check passes when every residual is below 1e-10.
    Otherwise it passes when some residual exceeds 1e-6 (a non-Markov witness).
    """
    if n_triples < 1:
        raise ValueError("n_triples must be positive")
    rng = _probe_rng(seed)
    trip = np.sort(rng.uniform(1e-3, 10.0, (n_triples, 3)), axis=1)
    trip = trip[(trip[:, 0] < trip[:, 1]) & (trip[:, 1] < trip[:, 2])]
    s, t, u = trip.T
    random_res = np.abs(markov_residual(params, s, t, u)) / np.asarray(variance(params, t)) ** 2
    fam_t = np.array(MARKOV_FAMILY)
    family_res = np.abs(markov_residual(params, np.sqrt(fam_t), fam_t, fam_t**2)) / np.asarray(
        variance(params, fam_t)
    ) ** 2
    stat = float(max(random_res.max(initial=0.0), family_res.max()))
    markov_case = params.hurst == 0.5
    threshold = MARKOV_NULL_TOLERANCE if markov_case else MARKOV_WITNESS_THRESHOLD
    passed = stat < threshold if markov_case else stat > threshold
    details = {
        "seed": seed,
        "n_triples": int(s.size),
        "expect": "markov" if markov_case else "non-markov witness",
        "random_max": float(random_res.max(initial=0.0)),
        "family_t": fam_t,
        "family_residuals": family_res,
    }
    return VerificationReport("markov", stat, threshold, passed, details)


# ---------------------------------------------------------------------------
# Long-range dependence
# ---------------------------------------------------------------------------

def _log_spaced(n_max: int, per_decade: int = 20) -> np.ndarray:
    k = np.arange(0, int(math.floor(per_decade * math.log10(n_max))) + 1)
    grid = np.unique(np.round(10.0 ** (k / per_decade)).astype(np.int64))
    return np.unique(np.append(grid[grid <= n_max], n_max))


def lrd_partial_sums(params: GfbmParams, p: int, N_max: int) -> list[tuple[int, float]]:
    """``(N, sum_{n<=N} r_z(p, n))`` at logarithmically spaced ``N <= N_max``."""
    if int(p) != p or p < 1:
        raise DomainError("p must be an integer >= 1")
    if int(N_max) != N_max or N_max < 10:
        raise DomainError("N_max must be an integer >= 10")
    terms = np.asarray(r_z(params, int(p), np.arange(1, int(N_max) + 1)))
    sums = np.cumsum(terms)
    Ns = _log_spaced(int(N_max))
    return [(int(N), float(sums[N - 1])) for N in Ns]


@dataclass(frozen=True)
class LrdClassification:
    label: str  # "LRD", "SRD" or "inconclusive"
    growth_slope: float
    expected_slope: float
    increment_slope: float
    tail_relative: float


def _fit_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def classify_lrd(params: GfbmParams, p: int = 1, N_max: int = 10**6) -> LrdClassification:
    """Classify the increment autocovariance series as long or short range.

    LRD: over the last decade the partial sums grow with log-log slope within
    0.05 of ``2H - 1 > 0`` and their increments grow.  SRD: the last-decade tail
    is below 1e-8 of the unit-increment variance, or the increments between
    log-spaced partial sums decay (a convergent power-law tail).
    """
    pairs = lrd_partial_sums(params, p, N_max)
    Ns = np.array([n for n, _ in pairs], dtype=float)
    S = np.array([v for _, v in pairs])
    last = Ns >= N_max / 10.0
    expected = 2 * params.hurst - 1
    scale = float(increment_second_moment(params, p, p + 1))
    idx = np.flatnonzero(last)
    tail = abs(S[-1] - S[idx[0] - 1 if idx[0] > 0 else 0])
    tail_rel = tail / scale
    absS = np.abs(S[last])
    growth = _fit_slope(Ns[last], absS) if np.all(absS > 0) else float("nan")
    inc = np.abs(np.diff(S[idx[0] - 1 :] if idx[0] > 0 else S[last]))
    inc_N = Ns[idx[0] :] if idx[0] > 0 else Ns[last][1:]
    inc_slope = _fit_slope(inc_N, inc) if inc.size >= 2 and np.all(inc > 0) else float("nan")
    if tail_rel < LRD_TAIL_TOLERANCE:
        label = "SRD"
    elif expected > 0 and inc_slope > 0 and abs(growth - expected) <= LRD_SLOPE_TOLERANCE:
        label = "LRD"
    elif inc_slope < 0:
        label = "SRD"
    else:
        label = "inconclusive"
    return LrdClassification(label, growth, expected, inc_slope, tail_rel)


def lrd_check(
    params: GfbmParams, p: int = 1, N_max: int = 10**6, claimed: GfbmParams | None = None
) -> VerificationReport:
    """Compare the classifier's verdict on ``params`` with the dichotomy
    (LRD iff ``H > 1/2`` and ``a != b``) evaluated at ``claimed`` (default: ``params``)."""
    claimed = params if claimed is None else claimed
    result = classify_lrd(params, p, N_max)
    predicted = "LRD" if claimed.hurst > 0.5 and claimed.a != claimed.b else "SRD"
    details = {
        "p": p,
        "N_max": N_max,
        "label": result.label,
        "predicted": predicted,
        "growth_slope": result.growth_slope,
        "expected_slope": result.expected_slope,
        "increment_slope": result.increment_slope,
        "tail_relative": result.tail_relative,
        "slope_tolerance": LRD_SLOPE_TOLERANCE,
        "tail_tolerance": LRD_TAIL_TOLERANCE,
        "params": params.as_dict(),
        "claimed": claimed.as_dict(),
    }
    stat = abs(result.growth_slope - result.expected_slope) if math.isfinite(result.growth_slope) else float("nan")
    return VerificationReport("lrd", stat, LRD_SLOPE_TOLERANCE, result.label == predicted, details)


def rz_asymptotic_check(params: GfbmParams, p: int = 10**4, n: int = 1, tolerance: float = 0.1) -> VerificationReport:
    """Relative gap between ``|r_z - (a^2+b^2) r_b| p^{2(1-H)}`` and ``|ab| 2^{2H-1} H |2H-1|``."""
    a, b, H = params.a, params.b, params.hurst
    base = float(r_z(GfbmParams(1.0, 0.0, H), 0, n))
    gap = abs(float(r_z(params, p, n)) - (a * a + b * b) * base) * p ** (2 * (1 - H))
    target = abs(a * b) * 2 ** (2 * H - 1) * H * abs(2 * H - 1)
    if target == 0:
        stat = gap
        passed = gap < 1e-12
    else:
        stat = abs(gap / target - 1)
        passed = stat < tolerance
    details = {"p": p, "n": n, "scaled_gap": gap, "predicted": target}
    return VerificationReport("rz_asymptotics", stat, tolerance, passed, details)


# ---------------------------------------------------------------------------
# Path roughness
# ---------------------------------------------------------------------------

def hurst_per_path(values: np.ndarray, order: int = 2) -> np.ndarray:
    """Discrete-variation Hurst estimates, one per row of ``values``.

    ``order=2`` filters with (1, -2, 1) at dilations 1 and 2;
    ``order=1`` uses plain increments (diagnostic only).  The estimate is
    ``log2(V_2 / V_1) / 2`` with ``V_k`` the mean squared filtered path.
    """
    x = np.atleast_2d(np.asarray(values, dtype=float))
    if order == 2:
        d1 = x[:, 2:] - 2 * x[:, 1:-1] + x[:, :-2]
        d2 = x[:, 4:] - 2 * x[:, 2:-2] + x[:, :-4]
    elif order == 1:
        d1 = x[:, 1:] - x[:, :-1]
        d2 = x[:, 2:] - x[:, :-2]
    else:
        raise ValueError("order must be 1 or 2")
    v1 = np.mean(d1**2, axis=1)
    v2 = np.mean(d2**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(v1 > 0, 0.5 * np.log2(v2 / v1), np.nan)


MIN_HURST_POINTS = 2**8


def hurst_estimate(ensemble: PathEnsemble) -> tuple[float, float]:
    """Mean and standard deviation over paths of the second-order estimate."""
    grid = ensemble.grid
    if not grid.uniform:
        raise GridError("the Hurst estimator needs a uniform grid")
    if len(grid) < MIN_HURST_POINTS:
        raise GridError(f"the Hurst estimator needs at least {MIN_HURST_POINTS} grid points")
    est = hurst_per_path(ensemble.values)
    if np.all(np.isnan(est)):
        return float("nan"), float("nan")
    return float(np.nanmean(est)), float(np.nanstd(est))


def hurst_check(ensemble: PathEnsemble, tolerance: float = 0.05) -> VerificationReport:
    """Distance between the mean second-order estimate and the ensemble's ``H``."""
    h_hat, spread = hurst_estimate(ensemble)
    stat = abs(h_hat - ensemble.params.hurst)
    details = {
        "estimate": h_hat,
        "dispersion": spread,
        "first_order": float(np.nanmean(hurst_per_path(ensemble.values, order=1))),
        "n_paths": ensemble.n_paths,
        "grid_points": len(ensemble.grid),
        "seed": ensemble.spec.seed,
    }
    return VerificationReport("hurst", stat, tolerance, bool(stat < tolerance), details)


def difference_quotient_sup(
    path: np.ndarray, grid: TimeGrid, t0: float, eps_sequence: Sequence[float]
) -> list[float]:
    """``max |Z(t) - Z(t0)| / |t - t0|`` over grid points within ``eps`` of ``t0``.

    ``t0`` is snapped to the nearest grid point.
    """
    pts = grid.points
    path = np.asarray(path, dtype=float)
    if path.shape != pts.shape:
        raise ValueError("path and grid lengths differ")
    if not pts[0] < t0 < pts[-1]:
        raise DomainError(f"t0={t0} is not interior to the grid [0, {pts[-1]}]")
    k0 = int(np.argmin(np.abs(pts - t0)))
    if k0 == 0 or k0 == pts.size - 1:
        raise DomainError(f"t0={t0} snaps to an endpoint of the grid")
    eps = np.asarray(eps_sequence, dtype=float)
    if np.any(np.diff(eps) >= 0):
        raise DomainError("eps_sequence must be strictly decreasing")
    step = grid.step if grid.uniform else min(pts[k0] - pts[k0 - 1], pts[k0 + 1] - pts[k0])
    if np.any(eps < step * (1 - 1e-12)):
        raise DomainError(f"every eps must be at least the grid step {step}")
    dt = pts - pts[k0]
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = np.abs((path - path[k0]) / dt)
    quotient[k0] = 0.0
    out = []
    for e in eps:
        window = np.abs(dt) <= e * (1 + 1e-12)
        out.append(float(quotient[window].max()))
    return out


def difference_quotient_trend(
    params: GfbmParams,
    seed: int,
    *,
    t0: float = 0.5,
    levels: Sequence[int] = tuple(range(8, 17)),
    n_paths: int = 100,
) -> dict:
    """Median finest-scale difference quotient at dyadic refinements of one path.

    Paths are simulated once at step ``2^-max(levels)`` on [0, 1] and
    subsampled.  The fitted slope of log(median sup) against log(step) is
    reported; for a rough path it sits near ``H - 1``.  Nothing is asserted.
    """
    levels = sorted(int(x) for x in levels)
    finest = levels[-1]
    grid = TimeGrid.regular(1.0, 2**finest)
    ens = sample_circulant(params, grid, SampleSpec(n_paths, seed, Method.CIRCULANT))
    steps, medians = [], []
    for level in levels:
        stride = 2 ** (finest - level)
        sub = TimeGrid.regular(1.0, 2**level)
        sups = [
            difference_quotient_sup(row[::stride], sub, t0, [sub.step])[0] for row in ens.values
        ]
        steps.append(sub.step)
        medians.append(float(np.median(sups)))
    slope = _fit_slope(np.array(steps), np.array(medians))
    return {
        "seed": seed,
        "t0": t0,
        "n_paths": n_paths,
        "steps": steps,
        "median_sup": medians,
        "slope": slope,
        "reference_slope": params.hurst - 1,
        "increasing": bool(np.all(np.diff(medians) > 0)),
    }


# ---------------------------------------------------------------------------
# Local time
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalTimeEstimate:
    """Occupation density ``L([0, T], x)`` as a histogram."""

    bin_edges: np.ndarray
    density: np.ndarray
    horizon: float
    degenerate: bool = False

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def occupation_total(self) -> float:
        return float(np.sum(self.density * self.widths))

    def occupation_error(self) -> float:
        return abs(self.occupation_total() / self.horizon - 1)

    def squared_integral(self) -> float:
        """Histogram estimate of the integral of ``L^2`` over x."""
        return float(np.sum(self.density**2 * self.widths))


def occupation_local_time(path: np.ndarray, grid: TimeGrid, n_bins: int = 128) -> LocalTimeEstimate:
    """Time spent per level bin divided by bin width.

    Sample ``k < n`` stands for the interval ``[t_k, t_{k+1})``, so the
    occupation times add up to ``T``.  A constant path yields one unit-width
    bin with ``degenerate=True`` and a warning.
    """
    if not grid.uniform:
        raise GridError("occupation_local_time needs a uniform grid")
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    path = np.asarray(path, dtype=float)
    if path.shape != grid.points.shape or path.size < 2:
        raise ValueError("path must match a grid of at least two points")
    T = grid.t_max
    lo, hi = float(path.min()), float(path.max())
    if not hi > lo:
        warnings.warn("constant path: local time collapses to a single bin", RuntimeWarning, stacklevel=2)
        edges = np.array([lo - 0.5, lo + 0.5])
        return LocalTimeEstimate(edges, np.array([T]), T, degenerate=True)
    dt = np.full(path.size - 1, grid.step)
    occupation, edges = np.histogram(path[:-1], bins=n_bins, range=(lo, hi), weights=dt)
    return LocalTimeEstimate(edges, occupation / np.diff(edges), T)


def local_time_l2_stability(
    ensemble: PathEnsemble, n_bins: int = 128, tolerance: float = 0.05
) -> VerificationReport:
    """Mean ``int L^2 dx`` at ``n_bins`` and ``2 n_bins``, plus the occupation identity."""
    coarse, fine, worst = [], [], 0.0
    for row in ensemble.values:
        lt1 = occupation_local_time(row, ensemble.grid, n_bins)
        lt2 = occupation_local_time(row, ensemble.grid, 2 * n_bins)
        worst = max(worst, lt1.occupation_error(), lt2.occupation_error())
        coarse.append(lt1.squared_integral())
        fine.append(lt2.squared_integral())
    m1, m2 = float(np.mean(coarse)), float(np.mean(fine))
    change = abs(m2 / m1 - 1)
    details = {
        "n_paths": ensemble.n_paths,
        "grid_points": len(ensemble.grid),
        "seed": ensemble.spec.seed,
        "n_bins": n_bins,
        "mean_l2": m1,
        "mean_l2_doubled_bins": m2,
        "max_occupation_error": worst,
    }
    passed = change < tolerance and worst < 1e-9
    return VerificationReport("local_time", change, tolerance, passed, details)


def density_double_integral(params: GfbmParams, T: float, n_quad: int) -> float:
    """Midpoint rule for ``int_0^T int_0^T p(0; s, t) ds dt``, diagonal cells left out."""
    if not T > 0:
        raise DomainError("T must be positive")
    if int(n_quad) != n_quad or n_quad < 16:
        raise DomainError("n_quad must be an integer >= 16")
    n = int(n_quad)
    h = T / n
    centers = (np.arange(n) + 0.5) * h
    total = 0.0
    rows = max(1, 2**21 // n)
    for lo in range(0, n - 1, rows):
        hi = min(lo + rows, n - 1)
        i = np.arange(lo, hi)[:, None]
        j = np.arange(n)[None, :]
        upper = j > i
        s = np.broadcast_to(centers[lo:hi, None], upper.shape)[upper]
        t = np.broadcast_to(centers[None, :], upper.shape)[upper]
        total += float(np.sum(increment_density(params, s, t, 0.0)))
    return 2.0 * total * h * h


def density_double_integral_extrapolated(params: GfbmParams, T: float, n_quad: int) -> dict:
    """Richardson extrapolation from ``n_quad / 2`` and ``n_quad`` cells.

    The left-out diagonal band carries mass of order ``h^{1-H}``, which sets
    the extrapolation order.
    """
    coarse = density_double_integral(params, T, n_quad // 2)
    fine = density_double_integral(params, T, n_quad)
    q = 2.0 ** (1.0 - params.hurst)
    extrapolated = (q * fine - coarse) / (q - 1.0)
    return {"coarse": coarse, "fine": fine, "extrapolated": extrapolated, "order": 1.0 - params.hurst}


# ---------------------------------------------------------------------------
# Self-similarity
# ---------------------------------------------------------------------------

def self_similarity_check(
    params: GfbmParams,
    h: float,
    ensemble_T: PathEnsemble,
    ensemble_hT: PathEnsemble,
    exponent: float | None = None,
    threshold: float = Z_THRESHOLD,
) -> VerificationReport:
    """Compare ``E Z_{ht}^2`` with ``h^{2H} E Z_t^2`` point by point.

    ``exponent`` replaces ``H`` in ``h^{2H}`` (negative controls).
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if ensemble_T.n_paths != ensemble_hT.n_paths:
        raise GridError("ensembles must have matching path counts")
    p1, p2 = ensemble_T.grid.points, ensemble_hT.grid.points
    if p1.shape != p2.shape or not np.allclose(p2, h * p1, rtol=1e-12, atol=0.0):
        raise GridError("the second grid must be the first dilated by h")
    H = params.hurst if exponent is None else exponent
    scale = h ** (2 * H)
    x1 = ensemble_T.values[:, 1:] ** 2
    x2 = ensemble_hT.values[:, 1:] ** 2
    n = x1.shape[0]
    m1, m2 = x1.mean(axis=0), x2.mean(axis=0)
    se1, se2 = x1.std(axis=0, ddof=1) / math.sqrt(n), x2.std(axis=0, ddof=1) / math.sqrt(n)
    denom = np.sqrt(se2**2 + scale**2 * se1**2)
    diff = m2 - scale * m1
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(denom > 0, np.abs(diff) / denom, np.where(diff == 0, 0.0, np.inf))
    stat = float(z.max()) if z.size else 0.0
    details = {
        "h": h,
        "exponent": H,
        "n_paths": n,
        "seeds": [ensemble_T.spec.seed, ensemble_hT.spec.seed],
        "comparisons": int(z.size),
    }
    return VerificationReport("self_similarity", stat, threshold, stat < threshold, details)
