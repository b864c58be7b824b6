"""Histograms, peak tracking and least-squares fits over trajectory samples."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import ContractError, FitWindowError

DEFAULT_BINS = 50
SMOOTH_WINDOW = 3
MIN_PEAK_BINS = 20
PEAK_SEPARATION = 2
#: Minimum prominence of a peak as a fraction of its own smoothed height.
PROMINENCE_FRAC = 0.5

_RANGE_SLACK = 1e-9


def natural_range(observable: str, L: int | None = None) -> tuple[float, float]:
    """Default histogram range of ``entropy``, ``overlap`` or ``magnetization``."""
    if observable == "entropy":
        if L is None:
            raise ContractError("entropy range needs L")
        return 0.0, L / 2
    if observable == "overlap":
        return 0.0, 1.0
    if observable == "magnetization":
        return -1.0, 1.0
    raise ContractError(f"unknown observable {observable!r}")


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if np.any(np.diff(self.edges) <= 0):
            raise ContractError("histogram edges must be strictly ascending")
        if len(self.counts) != len(self.edges) - 1:
            raise ContractError("counts and edges do not match")
        if np.any(self.counts < 0) or self.counts.sum() != self.total:
            raise ContractError("counts must be non-negative and sum to total")

    @classmethod
    def from_samples(cls, samples, bins: int = DEFAULT_BINS, range: tuple[float, float] = (0.0, 1.0), **meta):
        x = np.asarray(samples, dtype=float).ravel()
        lo, hi = range
        if x.size == 0:
            raise ContractError("cannot histogram an empty sample set")
        if np.any(~np.isfinite(x)) or x.min() < lo - _RANGE_SLACK or x.max() > hi + _RANGE_SLACK:
            raise ContractError(f"samples fall outside the histogram range [{lo}, {hi}]")
        counts, edges = np.histogram(np.clip(x, lo, hi), bins=bins, range=(lo, hi))
        return cls(edges=edges, counts=counts, total=int(x.size), meta=dict(meta))

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.widths)

    def merge(self, other: "Histogram") -> "Histogram":
        if not np.array_equal(self.edges, other.edges):
            raise ContractError("cannot merge histograms with different edges")
        return Histogram(self.edges, self.counts + other.counts, self.total + other.total, dict(self.meta))

    def rows(self) -> list[dict]:
        return [
            dict(left=float(a), right=float(b), count=int(c), density=float(d))
            for a, b, c, d in zip(self.edges[:-1], self.edges[1:], self.counts, self.density)
        ]


@dataclass(frozen=True)
class Peak:
    index: int
    position: float
    height: float
    mass: float


def smoothed_density(hist: Histogram, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Centered moving average; the window shrinks at the edges."""
    d = hist.density
    kernel = np.ones(window)
    return np.convolve(d, kernel, mode="same") / np.convolve(np.ones_like(d), kernel, mode="same")


def find_histogram_peaks(hist: Histogram, prominence_frac: float = PROMINENCE_FRAC) -> list[Peak]:
    """Prominent local maxima of the smoothed density, ascending in position.

    A local maximum counts only if it rises above the surrounding dips by at
    least ``prominence_frac`` of its own height, which rejects sampling ripples
    and flat plateaus alike.  The curve is padded with its own minimum so edge
    bins can be peaks.  A peak's mass is the probability between the smoothed
    minima that separate it from its neighbours.
    """
    s = smoothed_density(hist)
    if s.max() <= 0:
        return []
    padded = np.concatenate([[s.min()], s, [s.min()]])
    idx, props = find_peaks(padded, prominence=0.0)
    keep = props["prominences"] >= prominence_frac * padded[idx]
    idx = idx[keep] - 1
    if len(idx) == 0:
        return []
    cuts = [0] + [a + int(np.argmin(s[a : b + 1])) for a, b in zip(idx[:-1], idx[1:])] + [len(s)]
    prob = hist.counts / hist.total
    peaks = []
    for n, i in enumerate(idx):
        lo, hi = cuts[n], cuts[n + 1]
        peaks.append(Peak(int(i), float(hist.centers[i]), float(s[i]), float(prob[lo:hi].sum())))
    return peaks


def track_bimodal_peaks(hist: Histogram) -> tuple[Peak, Peak | None]:
    """Primary (tallest) peak and the next-tallest one at least two bins away."""
    if len(hist.counts) < MIN_PEAK_BINS:
        raise ContractError(f"peak tracking needs at least {MIN_PEAK_BINS} bins")
    peaks = find_histogram_peaks(hist)
    if not peaks:
        s = smoothed_density(hist)
        i = int(np.argmax(s))
        return Peak(i, float(hist.centers[i]), float(s[i]), 1.0), None
    ranked = sorted(peaks, key=lambda p: -p.height)
    primary = ranked[0]
    rest = [p for p in ranked[1:] if abs(p.index - primary.index) >= PEAK_SEPARATION]
    return primary, (rest[0] if rest else None)


def track_mz_left_peak(hist: Histogram) -> float | None:
    """Position of the leftmost prominent peak of a magnetization histogram."""
    peaks = find_histogram_peaks(hist)
    return peaks[0].position if peaks else None


def estimate_theta_E(samples) -> float:
    """Sample estimate of the truncated first moment ``int_{S>1} S P(S) dS``."""
    s = np.asarray(samples, dtype=float).ravel()
    if s.size == 0:
        raise ContractError("no entropy samples")
    return float(np.sum(np.where(s > 1.0, s, 0.0)) / s.size)


@dataclass
class CollapseResult:
    residual: float
    residual_unscaled: float
    peak: float
    x_range: tuple[float, float]

    @property
    def relative(self) -> float:
        return self.residual / self.peak if self.peak > 0 else 0.0


def collapse_residual(curves: dict[float, tuple[np.ndarray, np.ndarray]], scale: bool = True):
    """Max pairwise vertical spread of linearly interpolated curves on their common range.

    ``curves`` maps ``p_site`` to ``(g, y)``; with ``scale`` the abscissa is
    ``g * p_site``, otherwise ``g``.
    """
    xs, ys = [], []
    for p, (g, y) in curves.items():
        g = np.asarray(g, dtype=float)
        order = np.argsort(g)
        xs.append(g[order] * (p if scale else 1.0))
        ys.append(np.asarray(y, dtype=float)[order])
    lo = max(x[0] for x in xs)
    hi = min(x[-1] for x in xs)
    if not lo < hi:
        raise ContractError("curves have no overlapping abscissa range")
    knots = np.unique(np.concatenate([x[(x >= lo) & (x <= hi)] for x in xs] + [[lo, hi]]))
    vals = np.array([np.interp(knots, x, y) for x, y in zip(xs, ys)])
    return float(np.max(vals.max(axis=0) - vals.min(axis=0))), (lo, hi)


def collapse_check(curves: dict[float, tuple[np.ndarray, np.ndarray]]) -> CollapseResult:
    if len(curves) < 3:
        raise ContractError("collapse needs at least three curves")
    res, rng = collapse_residual(curves, scale=True)
    res_g, _ = collapse_residual(curves, scale=False)
    peak = max(float(np.max(y)) for _, y in curves.values())
    return CollapseResult(residual=res, residual_unscaled=res_g, peak=peak, x_range=rng)


@dataclass
class FitResult:
    model: str
    coefficients: dict[str, float]
    stderr: dict[str, float]
    rss: float
    n: int

    def to_dict(self) -> dict:
        return dict(model=self.model, coefficients=self.coefficients, stderr=self.stderr, rss=self.rss, n=self.n)


def _linear_fit(x: np.ndarray, y: np.ndarray):
    if x.size < 3:
        raise FitWindowError(f"need at least 3 points, got {x.size}")
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    rss = float(resid @ resid)
    cov = rss / (x.size - 2) * np.linalg.inv(X.T @ X)
    return coef, np.sqrt(np.diag(cov)), rss


def fit_power_law(xs, ys) -> FitResult:
    """Fit ``y = a x**b`` as a straight line in log-log coordinates."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ContractError("power-law fit needs positive data")
    coef, se, rss = _linear_fit(np.log(x), np.log(y))
    return FitResult(
        "power-law",
        {"log_prefactor": float(coef[0]), "exponent": float(coef[1])},
        {"log_prefactor": float(se[0]), "exponent": float(se[1])},
        rss,
        x.size,
    )


def fit_linear_in_inverse(xs, ys) -> FitResult:
    """Fit ``y = A + B / x``."""
    x = np.asarray(xs, dtype=float)
    if np.any(x == 0):
        raise ContractError("abscissa must be non-zero")
    coef, se, rss = _linear_fit(1.0 / x, np.asarray(ys, dtype=float))
    return FitResult(
        "linear-in-1/L",
        {"A": float(coef[0]), "B": float(coef[1])},
        {"A": float(se[0]), "B": float(se[1])},
        rss,
        x.size,
    )
