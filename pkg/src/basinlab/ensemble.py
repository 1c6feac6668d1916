"""Monte-Carlo experiments: uniform starts, one run per trial, tallies.

Trials are simulated in fixed-size chunks, each chunk an independent batch
of per-trial streams, so the tally does not depend on how many worker
threads process the chunks.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Sequence

import numpy as np

from .dynamics import DEFAULT_GRAD_TOL, simulate_batch
from .landscape import ESCAPED, Landscape, WellCatalog, build_well_catalog, resolve
from .stochastic import DEFAULT_SEED, StreamBank

log = logging.getLogger(__name__)

CHUNK = 4096
THREADS_ENV = "BASINLAB_THREADS"


class ConfigError(ValueError):
    pass


class TypeOrderingError(ValueError):
    pass


def worker_count(threads: int | None = None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class ExperimentConfig:
    function: str = "two_depths"
    interval: tuple[float, float] | None = None
    tau: float = 0.01
    eps: float = 0.0
    max_steps: int = 1000
    trials: int = 20_000
    seed: int = DEFAULT_SEED
    flow: bool = True
    grad_tol: float = DEFAULT_GRAD_TOL
    disfavored: int | None = None
    favored: int | None = None

    def __post_init__(self):
        if self.interval is not None:
            a, b = self.interval
            object.__setattr__(self, "interval", (float(a), float(b)))
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.eps >= 0:
            raise ConfigError(f"eps must be non-negative, got {self.eps}")
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        if self.max_steps < 1:
            raise ConfigError(f"max_steps must be at least 1, got {self.max_steps}")
        if (self.disfavored is None) != (self.favored is None):
            raise ConfigError("disfavored and favored must be given together")

    def landscape(self) -> Landscape:
        return resolve(self.function, self.interval)

    @property
    def flow_mode(self) -> bool:
        return self.flow and self.eps == 0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        if d["interval"] is not None:
            d["interval"] = list(d["interval"])
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        d = dict(d)
        if d.get("interval") is not None:
            d["interval"] = tuple(d["interval"])
        return cls(**d)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    counts: list[int]
    escaped: int
    type_totals: dict[int, int]
    disfavored: int | None
    favored: int | None
    ratio_total: float | None
    ratio_per_well: float | None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def in_interval(self) -> int:
        return sum(self.counts)

    @property
    def trials(self) -> int:
        return self.in_interval + self.escaped

    @property
    def escaped_fraction(self) -> float:
        return self.escaped / self.trials

    def ratio_stderr(self) -> float | None:
        """Naive delta-method standard error of ``ratio_per_well``."""
        if self.ratio_per_well is None or self.disfavored is None:
            return None
        a = self.type_totals.get(self.disfavored, 0)
        b = self.type_totals.get(self.favored, 0)
        if a == 0 or b == 0:
            return None
        return self.ratio_per_well * math.sqrt(1.0 / a + 1.0 / b)

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "trials": self.trials,
            "counts": list(self.counts),
            "escaped": self.escaped,
            "in_interval": self.in_interval,
            "type_totals": {str(k): v for k, v in sorted(self.type_totals.items())},
            "disfavored_type": self.disfavored,
            "favored_type": self.favored,
            "ratio_per_well": self.ratio_per_well,
            "ratio_total": self.ratio_total,
            "ratio_stderr": self.ratio_stderr(),
            **self.extra,
        }


def type_ordering(
    catalog: WellCatalog, designation: tuple[int, int] | None = None, tol: float = 1e-3
) -> tuple[int, int]:
    """(disfavored, favored) type labels.

    With two types the shallower one is disfavored; at equal depth the
    narrower one.  Any other case needs an explicit ``designation``.
    """
    labels = [t.label for t in catalog.types]
    if designation is not None:
        dis, fav = designation
        if dis not in labels or fav not in labels or dis == fav:
            raise TypeOrderingError(f"designation {designation} must name two types in {labels}")
        return dis, fav
    if len(catalog.types) != 2:
        raise TypeOrderingError(
            f"landscape has {len(catalog.types)} well type(s); "
            "designate the disfavored and favored types explicitly"
        )
    t0, t1 = catalog.types
    if abs(t0.mean_depth - t1.mean_depth) > tol:
        lo, hi = sorted((t0, t1), key=lambda t: t.mean_depth)
    elif abs(t0.mean_width - t1.mean_width) > tol:
        lo, hi = sorted((t0, t1), key=lambda t: t.mean_width)
    else:
        # ties: smaller width, then the type met first from the left
        lo, hi = sorted((t0, t1), key=lambda t: (t.mean_width, t.label))
    return lo.label, hi.label


def ratios(
    counts: Sequence[int], catalog: WellCatalog, dis: int, fav: int
) -> tuple[float | None, float | None]:
    """(per-well ratio, total ratio); None when the favored type has no hits."""
    labels = catalog.type_labels
    counts = np.asarray(counts)
    a = int(counts[labels == dis].sum())
    b = int(counts[labels == fav].sum())
    if b == 0:
        return None, None
    na = int(np.sum(labels == dis))
    nb = int(np.sum(labels == fav))
    # integer products keep the per-well ratio correctly rounded, so it
    # equals the total ratio exactly when both types have as many wells
    return (a * nb) / (b * na), a / b


def tally(catalog: WellCatalog, positions: np.ndarray) -> tuple[np.ndarray, int]:
    k = catalog.classify(positions)
    esc = int(np.sum(k == ESCAPED))
    counts = np.bincount(k[k != ESCAPED], minlength=len(catalog.wells))
    return counts, esc


def _chunks(n: int, size: int = CHUNK):
    return [(lo, min(n, lo + size)) for lo in range(0, n, size)]


def simulate_trials(
    land: Landscape,
    seed: int,
    trial_indices: np.ndarray,
    tau,
    eps,
    max_steps: int,
    flow: bool,
    grad_tol: float = DEFAULT_GRAD_TOL,
    seeds: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(start, final position, steps) for the given trials of one batch."""
    bank = StreamBank(seed if seeds is None else seeds, trial_indices)
    p0 = bank.uniform(land.a, land.b)
    p, steps = simulate_batch(land, p0, tau, eps, max_steps, bank, flow=flow, grad_tol=grad_tol)
    return p0, p, steps


def run_experiment(
    cfg: ExperimentConfig,
    catalog: WellCatalog | None = None,
    threads: int | None = None,
    land: Landscape | None = None,
) -> ExperimentResult:
    """Run ``cfg.trials`` trials and tally where each one ends.

    Trial ``i`` starts at the first uniform draw of stream ``(seed, i)`` and
    takes its noise from the same stream.  Ratios only count trials that end
    inside the interval.
    """
    land = land or cfg.landscape()
    catalog = catalog or build_well_catalog(land)
    designation = None if cfg.disfavored is None else (cfg.disfavored, cfg.favored)
    try:
        dis, fav = type_ordering(catalog, designation)
    except TypeOrderingError:
        if designation is not None:
            raise
        dis = fav = None

    def work(bounds):
        lo, hi = bounds
        _, p, _ = simulate_trials(
            land, cfg.seed, np.arange(lo, hi), cfg.tau, cfg.eps, cfg.max_steps,
            cfg.flow_mode, cfg.grad_tol,
        )
        return tally(catalog, p)

    chunks = _chunks(cfg.trials)
    n_workers = min(worker_count(threads), len(chunks))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(c) for c in chunks]
    counts = np.sum([c for c, _ in parts], axis=0).astype(int)
    escaped = sum(e for _, e in parts)
    return summarize(cfg, catalog, counts, escaped, dis, fav)


def summarize(cfg, catalog, counts, escaped, dis, fav) -> ExperimentResult:
    labels = catalog.type_labels
    type_totals = {t.label: int(np.asarray(counts)[labels == t.label].sum()) for t in catalog.types}
    if dis is None:
        r_well = r_total = None
    else:
        r_well, r_total = ratios(counts, catalog, dis, fav)
    log.info("%s tau=%g eps=%g: r=%s escaped=%d", catalog.interval, cfg.tau, cfg.eps, r_well, escaped)
    return ExperimentResult(
        cfg, [int(c) for c in counts], int(escaped), type_totals, dis, fav, r_total, r_well
    )


@dataclass(frozen=True)
class HistogramRow:
    index: int
    center: float
    type: int
    count: int


HISTOGRAM_HEADER = ("index", "center", "type", "count")


def histogram(res: ExperimentResult, catalog: WellCatalog) -> list[HistogramRow]:
    return [HistogramRow(w.index, w.center, w.type, res.counts[w.index]) for w in catalog.wells]
