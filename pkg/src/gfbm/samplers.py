"""Exact-in-distribution path samplers for the generalized fBm.

Two independent routes are provided:

* ``sample_cholesky`` factors the covariance matrix on the positive grid
  points (any grid up to :data:`CHOLESKY_MAX_POINTS` points);
* ``sample_circulant`` simulates stationary fractional Gaussian noise on
  ``[-T, T]`` by circulant embedding, integrates it outward from 0 to get
  the two-sided fBm, and forms ``a B_t + b B_{-t}`` (uniform grids only).

Random numbers come from per-path Philox4x64 streams.  Path ``i`` of an
ensemble with seed ``s`` reads the stream with key ``s`` and counter word 1
set to ``i``, so a path's draws depend on nothing but ``(s, i)`` and any
partition of path indices across workers gives bit-identical ensembles.
Raw 64-bit words become uniforms ``((w >> 11) + 0.5) / 2^53`` in (0, 1) and
normals through the inverse normal CDF.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import (
    EmbeddingError,
    GridError,
    MethodMismatchError,
    NotPositiveDefiniteError,
)
from .kernel import GfbmParams, _check_hurst, _power, _sym_second_difference, covariance

__all__ = [
    "CHOLESKY_MAX_POINTS",
    "JITTER_LEVELS",
    "MAX_EMBEDDING_SIZE",
    "Method",
    "PathEnsemble",
    "SampleSpec",
    "TimeGrid",
    "build_covariance_matrix",
    "cholesky_factor",
    "circulant_eigenvalues",
    "embedding_size",
    "fgn_autocovariance",
    "sample",
    "sample_cholesky",
    "sample_circulant",
    "standard_normals",
]

CHOLESKY_MAX_POINTS = 4096
JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)
MAX_EMBEDDING_SIZE = 2**26
# relative tolerance below zero accepted for circulant eigenvalues
EIGENVALUE_TOLERANCE = 1e-9
# bound on doubles held per block of paths (about 64 MB)
_BLOCK_BUDGET = 2**23

_UINT64_MAX = 2**64 - 1


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing sampling times starting exactly at 0."""

    points: np.ndarray
    uniform: bool = False
    step: float | None = None

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float).reshape(-1)
        if pts.size == 0:
            raise GridError("a time grid needs at least the point t = 0")
        if pts[0] != 0.0:
            raise GridError(f"the first grid point must be exactly 0, got {pts[0]}")
        if not np.all(np.isfinite(pts)):
            raise GridError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise GridError("grid points must be strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.uniform:
            if self.step is None or not self.step > 0:
                raise GridError("a uniform grid needs a positive step")
            expected = np.arange(pts.size) * float(self.step)
            if not np.allclose(pts, expected, rtol=1e-12, atol=0.0):
                raise GridError("points do not match k * step to relative 1e-12")
            object.__setattr__(self, "step", float(self.step))
        elif self.step is not None:
            raise GridError("step is only meaningful for uniform grids")

    @classmethod
    def regular(cls, t_max: float, n_steps: int) -> "TimeGrid":
        """``n_steps + 1`` equally spaced points on ``[0, t_max]``."""
        if int(n_steps) != n_steps or n_steps < 0:
            raise GridError("n_steps must be a non-negative integer")
        n_steps = int(n_steps)
        if n_steps == 0:
            return cls(np.zeros(1))
        if not t_max > 0:
            raise GridError("t_max must be positive")
        step = t_max / n_steps
        return cls(np.arange(n_steps + 1) * step, uniform=True, step=step)

    @classmethod
    def from_points(cls, points: Sequence[float]) -> "TimeGrid":
        """Wrap arbitrary points, flagging the grid uniform when it is."""
        pts = np.asarray(points, dtype=float)
        if pts.size >= 2:
            step = (pts[-1] - pts[0]) / (pts.size - 1)
            if step > 0 and np.allclose(pts, np.arange(pts.size) * step, rtol=1e-12, atol=0.0):
                return cls(pts, uniform=True, step=step)
        return cls(pts)

    def __len__(self) -> int:
        return int(self.points.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return (
            self.uniform == other.uniform
            and self.step == other.step
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def t_max(self) -> float:
        return float(self.points[-1])

    def dilate(self, h: float) -> "TimeGrid":
        if not h > 0:
            raise GridError("dilation factor must be positive")
        if self.uniform:
            return TimeGrid(np.arange(len(self)) * (self.step * h), uniform=True, step=self.step * h)
        return TimeGrid(self.points * h)


class Method(str, enum.Enum):
    CHOLESKY = "cholesky"
    CIRCULANT = "circulant"


@dataclass(frozen=True)
class SampleSpec:
    n_paths: int
    seed: int
    method: Method = Method.CIRCULANT

    def __post_init__(self) -> None:
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")
        if int(self.seed) != self.seed or not 0 <= self.seed <= _UINT64_MAX:
            raise ValueError("seed must be an integer in [0, 2^64)")
        object.__setattr__(self, "n_paths", int(self.n_paths))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "method", Method(self.method))


@dataclass
class PathEnsemble:
    """Simulated paths: ``values[i, k]`` is path ``i`` at ``grid.points[k]``."""

    grid: TimeGrid
    values: np.ndarray
    params: GfbmParams
    spec: SampleSpec
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        shape = (self.spec.n_paths, len(self.grid))
        if self.values.shape != shape:
            raise ValueError(f"values have shape {self.values.shape}, expected {shape}")

    @property
    def n_paths(self) -> int:
        return self.spec.n_paths


# ---------------------------------------------------------------------------
# Random numbers
# ---------------------------------------------------------------------------

def _path_stream(seed: int, index: int) -> np.random.Philox:
    return np.random.Philox(key=seed, counter=[0, index, 0, 0])


def standard_normals(seed: int, start: int, stop: int, dim: int) -> np.ndarray:
    """Standard normals for paths ``start .. stop-1``, one row of ``dim`` per path."""
    raw = np.empty((stop - start, dim), dtype=np.uint64)
    for row, index in enumerate(range(start, stop)):
        raw[row] = _path_stream(seed, index).random_raw(dim)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def _fill_rows(
    out: np.ndarray,
    n_paths: int,
    block: int,
    n_workers: int,
    make_rows: Callable[[int, int], np.ndarray],
) -> None:
    blocks = [(lo, min(lo + block, n_paths)) for lo in range(0, n_paths, block)]

    def run(bounds: tuple[int, int]) -> None:
        lo, hi = bounds
        out[lo:hi] = make_rows(lo, hi)

    if n_workers <= 1 or len(blocks) == 1:
        for b in blocks:
            run(b)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            list(pool.map(run, blocks))


# ---------------------------------------------------------------------------
# Cholesky route
# ---------------------------------------------------------------------------

def build_covariance_matrix(params: GfbmParams, grid: TimeGrid) -> np.ndarray:
    """Covariance of ``Z`` at the strictly positive grid points.

    The ``t = 0`` row and column are left out: ``Z_0 = 0`` almost surely.
    """
    pts = grid.points[1:]
    return np.asarray(covariance(params, pts[:, None], pts[None, :]), dtype=float).reshape(
        pts.size, pts.size
    )


def cholesky_factor(
    cov: np.ndarray,
    jitter_policy: Sequence[float] = JITTER_LEVELS,
    context: str = "",
) -> tuple[np.ndarray, float]:
    """Lower factor ``L`` with ``L L^T = cov + eps I``.

    ``eps`` runs through ``level * trace(cov) / n`` for each level of
    ``jitter_policy`` until the factorization succeeds; the ``eps`` used is
    returned alongside ``L``.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if cov.shape != (n, n) or not np.allclose(cov, cov.T, rtol=1e-12, atol=0.0):
        raise ValueError("covariance matrix must be square and symmetric")
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = np.trace(cov) / n
    for level in jitter_policy:
        eps = level * scale
        try:
            return np.linalg.cholesky(cov + eps * np.eye(n)), float(eps)
        except np.linalg.LinAlgError:
            continue
    where = f" for {context}" if context else ""
    raise NotPositiveDefiniteError(
        f"covariance matrix is not positive definite{where}, "
        f"even with jitter {max(jitter_policy):g} * trace/n"
    )


def sample_cholesky(
    params: GfbmParams, grid: TimeGrid, spec: SampleSpec, n_workers: int = 1
) -> PathEnsemble:
    if spec.method is not Method.CHOLESKY:
        raise MethodMismatchError("sample_cholesky needs spec.method == Method.CHOLESKY")
    if len(grid) > CHOLESKY_MAX_POINTS:
        raise GridError(
            f"grid has {len(grid)} points; the Cholesky sampler is capped at "
            f"{CHOLESKY_MAX_POINTS} points, use the circulant method for larger uniform grids"
        )
    context = f"a={params.a}, b={params.b}, H={params.hurst}, grid of {len(grid)} points on [0, {grid.t_max}]"
    L, eps = cholesky_factor(build_covariance_matrix(params, grid), context=context)
    m = len(grid) - 1
    values = np.zeros((spec.n_paths, len(grid)))
    if m > 0:
        block = max(1, min(spec.n_paths, _BLOCK_BUDGET // (2 * m)))

        def rows(lo: int, hi: int) -> np.ndarray:
            return standard_normals(spec.seed, lo, hi, m) @ L.T

        inner = np.empty((spec.n_paths, m))
        _fill_rows(inner, spec.n_paths, block, n_workers, rows)
        values[:, 1:] = inner
    provenance = {
        "method": spec.method.value,
        "seed": spec.seed,
        "jitter": eps,
        "rng": "philox4x64, key=seed, counter[1]=path index, inverse-CDF normals",
    }
    return PathEnsemble(grid, values, params, spec, provenance)


# ---------------------------------------------------------------------------
# Circulant route
# ---------------------------------------------------------------------------

def fgn_autocovariance(H: float, k, step: float = 1.0):
    """Autocovariance at lag ``k`` of ``B_{(j+1) step} - B_{j step}``, ``j`` in Z."""
    alpha = 2.0 * _check_hurst(H)
    if not step > 0:
        raise ValueError("step must be positive")
    k = np.abs(np.asarray(k, dtype=float))
    with np.errstate(divide="ignore"):
        second = np.where(
            k > 0,
            _power(k, alpha) * _sym_second_difference(alpha, np.where(k > 0, 1.0 / np.maximum(k, 1.0), 0.0)),
            2.0,
        )
    out = 0.5 * step**alpha * second
    return float(out) if out.ndim == 0 else out


def embedding_size(n_increments: int) -> int:
    """First power of two at least twice the number of increments."""
    return max(2, 1 << math.ceil(math.log2(2 * n_increments)))


def circulant_eigenvalues(H: float, size: int, step: float = 1.0) -> np.ndarray:
    """Spectrum of the circulant matrix embedding the fGn autocovariance."""
    lags = np.arange(size)
    row = fgn_autocovariance(H, np.minimum(lags, size - lags), step)
    return np.fft.fft(row).real


def _embedding(H: float, n_increments: int, step: float) -> tuple[int, np.ndarray, float]:
    size = embedding_size(n_increments)
    while True:
        eig = circulant_eigenvalues(H, size, step)
        lo = eig.min()
        if lo >= -EIGENVALUE_TOLERANCE * eig.max():
            return size, np.sqrt(np.clip(eig, 0.0, None) / size), float(lo)
        if size >= MAX_EMBEDDING_SIZE:
            raise EmbeddingError(
                f"circulant embedding for H={H}, {n_increments} increments still has a "
                f"negative eigenvalue ({lo:.3e}) at the size cap {MAX_EMBEDDING_SIZE}"
            )
        size *= 2


def sample_circulant(
    params: GfbmParams, grid: TimeGrid, spec: SampleSpec, n_workers: int = 1
) -> PathEnsemble:
    if spec.method is not Method.CIRCULANT:
        raise MethodMismatchError("sample_circulant needs spec.method == Method.CIRCULANT")
    if len(grid) == 1:
        values = np.zeros((spec.n_paths, 1))
        return PathEnsemble(grid, values, params, spec, {"method": spec.method.value, "seed": spec.seed})
    if not grid.uniform:
        raise MethodMismatchError("the circulant sampler needs a uniform grid")
    n = len(grid) - 1
    size, sqrt_eig, min_eig = _embedding(params.hurst, 2 * n, grid.step)
    a, b = params.a, params.b
    block = max(1, min(spec.n_paths, _BLOCK_BUDGET // (4 * size)))

    def rows(lo: int, hi: int) -> np.ndarray:
        g = standard_normals(spec.seed, lo, hi, 2 * size)
        xi = (g[:, :size] + 1j * g[:, size:]) * sqrt_eig
        incr = np.fft.fft(xi, axis=1).real[:, : 2 * n]
        # incr[:, n + j] = B_{(j+1) step} - B_{j step} for j = -n .. n-1
        out = np.empty((hi - lo, n + 1))
        out[:, 0] = 0.0
        forward = np.cumsum(incr[:, n:], axis=1)
        backward = -np.cumsum(incr[:, n - 1 :: -1], axis=1)
        out[:, 1:] = a * forward + b * backward
        return out

    values = np.empty((spec.n_paths, n + 1))
    _fill_rows(values, spec.n_paths, block, n_workers, rows)
    provenance = {
        "method": spec.method.value,
        "seed": spec.seed,
        "embedding_size": size,
        "min_eigenvalue": min_eig,
        "rng": "philox4x64, key=seed, counter[1]=path index, inverse-CDF normals",
    }
    return PathEnsemble(grid, values, params, spec, provenance)


def sample(params: GfbmParams, grid: TimeGrid, spec: SampleSpec, n_workers: int = 1) -> PathEnsemble:
    """Dispatch on ``spec.method``."""
    if spec.method is Method.CHOLESKY:
        return sample_cholesky(params, grid, spec, n_workers)
    return sample_circulant(params, grid, spec, n_workers)
