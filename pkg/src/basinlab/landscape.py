"""Landscapes and their well structure.

A :class:`Landscape` pairs a loss with its exact derivative on a working
interval.  :func:`build_well_catalog` cuts the interval into wells, one per
local minimum, bounded by the neighbouring local maxima.  Under gradient
flow the well containing a point is exactly its basin of attraction.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import expr as ex

log = logging.getLogger(__name__)

ESCAPED = -1

Array = np.ndarray
ArrayFn = Callable[[Array], Array]


class LandscapeError(ValueError):
    """The landscape cannot be analyzed (flat segments, no minima, ...)."""


class CatalogWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Landscape:
    name: str
    value: ArrayFn
    derivative: ArrayFn
    interval: tuple[float, float]
    expression: ex.Expression | None = field(default=None, compare=False)

    def __post_init__(self):
        a, b = (float(v) for v in self.interval)
        if not (math.isfinite(a) and math.isfinite(b)) or not b > a:
            raise ValueError(f"interval must be finite with a < b, got {self.interval}")
        object.__setattr__(self, "interval", (a, b))

    @property
    def a(self) -> float:
        return self.interval[0]

    @property
    def b(self) -> float:
        return self.interval[1]

    @property
    def length(self) -> float:
        return self.b - self.a

    # scalars go through one-element arrays so they hit the same numpy
    # kernels as batch evaluation and round identically

    def f(self, x: float) -> float:
        return float(self.value(np.array([x], dtype=float))[0])

    def df(self, x: float) -> float:
        return float(self.derivative(np.array([x], dtype=float))[0])

    def with_interval(self, a: float, b: float) -> "Landscape":
        return Landscape(self.name, self.value, self.derivative, (a, b), self.expression)

    @classmethod
    def from_expression(
        cls, source: str | ex.Expression, interval: Sequence[float], name: str | None = None
    ) -> "Landscape":
        e = ex.parse(source) if isinstance(source, str) else source
        de = ex.differentiate(e)
        return cls(
            name=name or ex.to_text(e),
            value=ex.compile_numpy(e),
            derivative=ex.compile_numpy(de),
            interval=(interval[0], interval[1]),
            expression=e,
        )


# --------------------------------------------------------------------------
# builtins

TWO_DEPTHS_TEXT = "sin(pi*x) + cos(2*pi*x) + 2"
TWO_WIDTHS_TEXT = "(sin(pi*x) + sin(2*pi*x)/2)^2"

TWO_DEPTHS_INTERVAL = (-5.92, 6.08)
TWO_WIDTHS_INTERVAL = (-7.0 / 3.0, 7.0 / 3.0)

_PI = math.pi


def _two_depths(x):
    return np.sin(_PI * x) + np.cos(2 * _PI * x) + 2.0


def _two_depths_prime(x):
    # pi cos(pi x) - 2 pi sin(2 pi x), factored
    return _PI * np.cos(_PI * x) * (1.0 - 4.0 * np.sin(_PI * x))


def _two_widths(x):
    # sin(pi x) + sin(2 pi x)/2 = sin(pi x) (1 + cos(pi x)) = 2 sin(pi x) cos^2(pi x / 2)
    h = 2.0 * np.sin(_PI * x) * np.cos(0.5 * _PI * x) ** 2
    return h * h


def _two_widths_prime(x):
    # 2 h h' with h' = pi (cos(pi x) + cos(2 pi x)) = 2 pi cos(3 pi x / 2) cos(pi x / 2);
    # product forms avoid the cancellation in 1 + cos(pi x) near odd integers
    c = np.cos(0.5 * _PI * x)
    return 8.0 * _PI * np.sin(_PI * x) * c**3 * np.cos(1.5 * _PI * x)


BUILTINS = ("two_depths", "two_widths")


def builtin(name: str) -> Landscape:
    """One of the two reference landscapes.

    ``two_depths`` has alternating shallow and deep wells of similar width;
    ``two_widths`` has wells of equal depth and two different widths.
    """
    if name == "two_depths":
        return Landscape(
            name, _two_depths, _two_depths_prime, TWO_DEPTHS_INTERVAL, ex.parse(TWO_DEPTHS_TEXT)
        )
    if name == "two_widths":
        return Landscape(
            name, _two_widths, _two_widths_prime, TWO_WIDTHS_INTERVAL, ex.parse(TWO_WIDTHS_TEXT)
        )
    raise KeyError(f"unknown builtin landscape {name!r}; choose from {', '.join(BUILTINS)}")


def resolve(function: str, interval: Sequence[float] | None = None) -> Landscape:
    """Builtin name or expression text, optionally overriding the interval."""
    if function in BUILTINS:
        land = builtin(function)
        return land.with_interval(*interval) if interval is not None else land
    if interval is None:
        raise ValueError("an interval is required for expression landscapes")
    return Landscape.from_expression(function, interval)


# --------------------------------------------------------------------------
# critical points


@dataclass(frozen=True)
class CriticalPoint:
    location: float
    kind: str  # "min", "max" or "boundary"


def _bisect(deriv: ArrayFn, lo: Array, hi: Array, slo: Array, tol: float) -> Array:
    """Shrink every bracket [lo, hi] around a sign change of ``deriv``."""
    lo, hi = lo.copy(), hi.copy()
    done = np.zeros(lo.shape, dtype=bool)
    exact = np.full(lo.shape, np.nan)
    for _ in range(200):
        open_ = ~done & (hi - lo >= tol)
        if not open_.any():
            break
        mid = 0.5 * (lo + hi)
        # no representable midpoint left
        stuck = open_ & ((mid <= lo) | (mid >= hi))
        done |= stuck
        open_ &= ~stuck
        sm = np.sign(deriv(mid))
        hit = open_ & (sm == 0)
        exact[hit] = mid[hit]
        done |= hit
        same = open_ & ~hit & (sm == slo)
        lo = np.where(same, mid, lo)
        hi = np.where(open_ & ~hit & ~same, mid, hi)
    return np.where(np.isnan(exact), 0.5 * (lo + hi), exact)


def _scan(deriv: ArrayFn, lo: float, hi: float, grid_n: int, tol: float) -> list[CriticalPoint]:
    xs = np.linspace(lo, hi, grid_n + 1)
    with np.errstate(all="ignore"):
        d = deriv(xs)
    if not np.all(np.isfinite(d)):
        bad = xs[~np.isfinite(d)][0]
        raise LandscapeError(f"derivative is not finite at x={bad:.12g}")
    s = np.sign(d)
    zero = s == 0
    if np.any(zero[:-1] & zero[1:]):
        i = int(np.flatnonzero(zero[:-1] & zero[1:])[0])
        raise LandscapeError(
            f"derivative vanishes on the whole cell [{xs[i]:.12g}, {xs[i + 1]:.12g}]; "
            "flat segments are not supported"
        )
    out: list[CriticalPoint] = []

    # sign changes strictly inside a cell
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    if idx.size:
        roots = _bisect(deriv, xs[idx], xs[idx + 1], s[idx], tol)
        for r, left_sign in zip(roots, s[idx]):
            out.append(CriticalPoint(float(r), "min" if left_sign < 0 else "max"))

    # derivative exactly zero on a grid node
    for i in np.flatnonzero(zero):
        left = s[i - 1] if i > 0 else 0.0
        right = s[i + 1] if i < grid_n else 0.0
        if left and right and left == right:
            continue  # inflection with zero slope
        ref = right if right else -left
        if not ref:
            continue
        # ref is the slope sign just to the right of the node
        out.append(CriticalPoint(float(xs[i]), "min" if ref > 0 else "max"))

    out.sort(key=lambda c: c.location)
    return out


def find_critical_points(
    land: Landscape,
    grid_n: int = 10_000,
    tol: float = 1e-10,
    endpoints: bool = False,
) -> list[CriticalPoint]:
    """Minima and maxima of ``land`` inside its interval, left to right.

    The derivative is sampled on ``grid_n + 1`` uniform nodes and every sign
    change is refined by bisection to a bracket narrower than ``tol``.  With
    ``endpoints=True`` the interval ends are added as ``"boundary"`` points
    unless a critical point already sits within ``tol`` of them.
    """
    if grid_n < 1:
        raise ValueError("grid_n must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    pts = _scan(land.derivative, land.a, land.b, grid_n, tol)
    if endpoints:
        if not pts or pts[0].location - land.a > tol:
            pts.insert(0, CriticalPoint(land.a, "boundary"))
        if not pts or land.b - pts[-1].location > tol:
            pts.append(CriticalPoint(land.b, "boundary"))
    return pts


# --------------------------------------------------------------------------
# wells


@dataclass(frozen=True)
class Well:
    index: int
    center: float
    min_value: float
    left: float
    right: float
    depth: float
    type: int

    @property
    def width(self) -> float:
        return self.right - self.left

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "center": self.center,
            "min_value": self.min_value,
            "left": self.left,
            "right": self.right,
            "width": self.width,
            "depth": self.depth,
            "type": self.type,
        }


@dataclass(frozen=True)
class TypeSummary:
    label: int
    count: int
    mean_width: float
    mean_depth: float


@dataclass(frozen=True)
class WellCatalog:
    wells: tuple[Well, ...]
    interval: tuple[float, float]
    types: tuple[TypeSummary, ...]

    @property
    def boundaries(self) -> np.ndarray:
        """Left edge of every well followed by the right edge of the last."""
        return np.array([w.left for w in self.wells] + [self.wells[-1].right])

    @property
    def maxima(self) -> tuple[float, ...]:
        return tuple(self.boundaries)

    @property
    def span(self) -> tuple[float, float]:
        return self.wells[0].left, self.wells[-1].right

    @property
    def type_labels(self) -> np.ndarray:
        return np.array([w.type for w in self.wells], dtype=np.int64)

    def type_summary(self, label: int) -> TypeSummary:
        for t in self.types:
            if t.label == label:
                return t
        raise KeyError(label)

    def classify(self, x) -> np.ndarray:
        """Vectorized :func:`locate_basin`; non-finite input maps to ESCAPED."""
        x = np.asarray(x, dtype=float)
        edges = self.boundaries
        lo = max(self.interval[0], edges[0])
        hi = min(self.interval[1], edges[-1])
        k = np.searchsorted(edges, x, side="right") - 1
        k = np.minimum(k, len(self.wells) - 1)
        inside = np.isfinite(x) & (x >= lo) & (x <= hi)
        return np.where(inside, k, ESCAPED).astype(np.int64)

    def rows(self) -> list[dict]:
        return [w.as_dict() for w in self.wells]


def locate_basin(catalog: WellCatalog, x: float) -> int:
    """Index of the well whose ``[left, right)`` holds ``x``, or ESCAPED.

    The last well is closed on the right.  Points outside the working
    interval are escaped.
    """
    return int(catalog.classify(x))


def _group_types(pairs: list[tuple[float, float]], tol: float) -> list[int]:
    reps: list[tuple[float, float]] = []
    labels = []
    for width, depth in pairs:
        for k, (w0, d0) in enumerate(reps):
            if abs(width - w0) <= tol and abs(depth - d0) <= tol:
                labels.append(k)
                break
        else:
            reps.append((width, depth))
            labels.append(len(reps) - 1)
    return labels


def _outer_max(land: Landscape, side: str, grid_n: int, tol: float) -> float | None:
    """Nearest maximum just outside one end of the interval, if any."""
    a, b, n = land.a, land.b, land.length
    lo, hi = (a - n, a) if side == "left" else (b, b + n)
    try:
        pts = _scan(land.derivative, lo, hi, grid_n, tol)
    except LandscapeError:
        return None
    maxima = [p.location for p in pts if p.kind == "max"]
    if not maxima:
        return None
    return maxima[-1] if side == "left" else maxima[0]


def build_well_catalog(
    land: Landscape,
    grid_n: int = 10_000,
    tol: float = 1e-10,
    type_tol: float = 1e-3,
    snap_tol: float = 1e-8,
) -> WellCatalog:
    """Cut the working interval into wells bounded by local maxima.

    Ends of the interval that are not maxima are snapped to the nearest
    enclosing maximum, with a :class:`CatalogWarning`: a sliver at the end
    holding no minimum is dropped, and a well cut off by the end is extended
    to the maximum just beyond it.  Wells whose width and depth agree within
    ``type_tol`` share a type label.
    """
    crit = find_critical_points(land, grid_n, tol)
    minima = [c for c in crit if c.kind == "min"]
    if not minima:
        raise LandscapeError(f"no local minimum of {land.name} in {land.interval}")
    kinds = [c.kind for c in crit]
    if any(k0 == k1 for k0, k1 in zip(kinds, kinds[1:])):
        raise LandscapeError("critical points do not alternate between minima and maxima")

    notes = []
    if crit[0].kind == "max":
        left = crit[0].location
        if left - land.a > snap_tol:
            notes.append(f"left end {land.a:.12g} is not a maximum; clipped to {left:.12g}")
    else:
        outer = _outer_max(land, "left", grid_n, tol)
        left = land.a if outer is None else outer
        if land.a - left > snap_tol:
            notes.append(f"left end {land.a:.12g} is not a maximum; extended to {left:.12g}")
        elif outer is None:
            notes.append(f"no maximum left of {land.a:.12g}; first well is truncated")
    if crit[-1].kind == "max":
        right = crit[-1].location
        if land.b - right > snap_tol:
            notes.append(f"right end {land.b:.12g} is not a maximum; clipped to {right:.12g}")
    else:
        outer = _outer_max(land, "right", grid_n, tol)
        right = land.b if outer is None else outer
        if right - land.b > snap_tol:
            notes.append(f"right end {land.b:.12g} is not a maximum; extended to {right:.12g}")
        elif outer is None:
            notes.append(f"no maximum right of {land.b:.12g}; last well is truncated")
    for msg in notes:
        warnings.warn(msg, CatalogWarning, stacklevel=2)

    edges = [left] + [c.location for c in crit if c.kind == "max" and left < c.location < right]
    edges.append(right)
    centers = [c.location for c in minima]
    if len(centers) != len(edges) - 1:
        raise LandscapeError("could not pair every minimum with two bounding maxima")

    edge_vals = land.value(np.array(edges))
    min_vals = land.value(np.array(centers))
    pairs, raw = [], []
    for i, c in enumerate(centers):
        depth = float(min(edge_vals[i], edge_vals[i + 1]) - min_vals[i])
        pairs.append((edges[i + 1] - edges[i], depth))
        raw.append((c, float(min_vals[i]), edges[i], edges[i + 1], depth))
    labels = _group_types(pairs, type_tol)
    wells = tuple(
        Well(i, c, mv, lft, rgt, dep, labels[i]) for i, (c, mv, lft, rgt, dep) in enumerate(raw)
    )
    types = []
    for label in sorted(set(labels)):
        members = [w for w in wells if w.type == label]
        types.append(
            TypeSummary(
                label,
                len(members),
                float(np.mean([w.width for w in members])),
                float(np.mean([w.depth for w in members])),
            )
        )
    log.debug("catalog for %s: %d wells, %d types", land.name, len(wells), len(types))
    return WellCatalog(wells, land.interval, tuple(types))


@dataclass(frozen=True)
class TauBound:
    mean_width: float
    mean_gradient: float
    bound: float


def tau_bound(land: Landscape, catalog: WellCatalog, quad_n: int = 100_000) -> TauBound:
    """Step-size scale separating descent-like from well-hopping dynamics.

    Mean well width over the mean gradient magnitude on the interval, the
    latter by the composite midpoint rule with ``quad_n`` cells.
    """
    if quad_n < 1:
        raise ValueError("quad_n must be positive")
    h = land.length / quad_n
    mids = land.a + h * (np.arange(quad_n) + 0.5)
    g_bar = float(np.sum(np.abs(land.derivative(mids))) * h / land.length)
    w = float(np.mean([well.width for well in catalog.wells]))
    return TauBound(w, g_bar, w / g_bar if g_bar > 0 else math.inf)
