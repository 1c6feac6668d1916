"""Grid experiments over step size and noise level."""

from __future__ import annotations

import logging
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .ensemble import (
    CHUNK,
    ExperimentConfig,
    TypeOrderingError,
    simulate_trials,
    summarize,
    tally,
    type_ordering,
    worker_count,
)
from .landscape import build_well_catalog
from .stochastic import derive_seed

log = logging.getLogger(__name__)

DEFAULT_TAUS = (0.001, 0.01, 0.02, 0.04, 0.06)
SWEEP_HEADER = ("tau", "epsilon", "trials", "in_interval", "escaped", "ratio_per_well", "ratio_total")


@dataclass(frozen=True)
class SweepConfig:
    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    taus: tuple[float, ...] = DEFAULT_TAUS
    eps_min: float = 0.0
    eps_max: float = 0.5
    eps_count: int = 26
    trials: int = 1000
    steps: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        if not self.taus or min(self.taus) <= 0:
            raise ValueError("taus must be a non-empty list of positive step sizes")
        if self.eps_count < 1 or self.eps_min < 0 or self.eps_max < self.eps_min:
            raise ValueError("eps grid needs 0 <= eps_min <= eps_max and eps_count >= 1")
        if self.trials < 1 or self.steps < 1:
            raise ValueError("trials and steps must be positive")

    @property
    def eps_values(self) -> tuple[float, ...]:
        if self.eps_count == 1:
            return (float(self.eps_min),)
        grid = np.linspace(self.eps_min, self.eps_max, self.eps_count)
        return tuple(float(round(e, 12)) for e in grid)

    def cells(self) -> list[tuple[float, float]]:
        return [(t, e) for t in sorted(self.taus) for e in self.eps_values]


@dataclass
class SweepRow:
    tau: float
    eps: float
    trials: int
    in_interval: int
    escaped: int
    ratio_per_well: float | None
    ratio_total: float | None
    counts: list[int] = field(default_factory=list)
    error: str | None = None

    def csv_fields(self) -> list[str]:
        def r(v):
            return "" if v is None else repr(float(v))

        return [
            repr(self.tau), repr(self.eps), str(self.trials), str(self.in_interval),
            str(self.escaped), r(self.ratio_per_well), r(self.ratio_total),
        ]


SweepTable = list  # rows ordered by (tau, eps)


def _bits(x: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def cell_seed(master_seed: int, tau: float, eps: float) -> int:
    """Seed of one grid cell, keyed by the cell's own (tau, eps) values so
    adding or removing other cells never changes it."""
    return derive_seed(master_seed, _bits(tau), _bits(eps))


def run_sweep(sc: SweepConfig, threads: int | None = None) -> list[SweepRow]:
    """One experiment per (tau, eps) cell, summarized into rows.

    Noisy cells are packed together into batches; that is only a speed-up,
    since every trial depends solely on its cell seed and trial index.  A
    cell that fails is reported in its row and the sweep carries on.
    """
    base = sc.base
    land = base.landscape()
    catalog = build_well_catalog(land)
    designation = None if base.disfavored is None else (base.disfavored, base.favored)
    try:
        dis, fav = type_ordering(catalog, designation)
    except TypeOrderingError:
        if designation is not None:
            raise
        dis = fav = None

    cells = sc.cells()
    n = sc.trials
    # jobs are (cell ids, trial lo, trial hi) slices of at most CHUNK trials
    per_job = max(1, CHUNK // n)
    flow_ids = [i for i, (_, e) in enumerate(cells) if base.flow and e == 0]
    noisy_ids = [i for i in range(len(cells)) if i not in set(flow_ids)]
    jobs = []
    for ids in [[i] for i in flow_ids] + [
        noisy_ids[k : k + per_job] for k in range(0, len(noisy_ids), per_job)
    ]:
        if n > CHUNK:
            jobs += [(ids, lo, min(n, lo + CHUNK)) for lo in range(0, n, CHUNK)]
        else:
            jobs.append((ids, 0, n))

    def work(job):
        ids, lo, hi = job
        if len(ids) > 1:
            try:
                return _work(job)
            except Exception:
                # isolate the failing cell(s) from their batch mates
                return [row for i in ids for row in work(([i], lo, hi))]
        return _work(job)

    def _work(job):
        ids, lo, hi = job
        m = hi - lo
        taus = np.repeat([cells[i][0] for i in ids], m)
        epss = np.repeat([cells[i][1] for i in ids], m)
        seeds = np.repeat(np.array([cell_seed(base.seed, *cells[i]) for i in ids], dtype=object), m)
        trial_idx = np.tile(np.arange(lo, hi), len(ids))
        flow = base.flow and bool(np.all(epss == 0))
        try:
            _, p, _ = simulate_trials(
                land, 0, trial_idx, taus, epss, sc.steps, flow, base.grad_tol, seeds=seeds
            )
        except Exception as exc:  # recorded per cell, never fatal to the sweep
            if len(ids) > 1:
                raise
            return [(ids[0], None, None, f"{type(exc).__name__}: {exc}")]
        out = []
        for k, i in enumerate(ids):
            counts, esc = tally(catalog, p[k * m : (k + 1) * m])
            out.append((i, counts, esc, None))
        return out

    n_workers = min(worker_count(threads), len(jobs))
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(work, jobs))
    else:
        parts = [work(j) for j in jobs]

    acc: dict[int, list] = {i: [np.zeros(len(catalog.wells), dtype=np.int64), 0, None] for i in range(len(cells))}
    for part in parts:
        for i, counts, esc, err in part:
            if err is not None:
                acc[i][2] = err
                continue
            acc[i][0] = acc[i][0] + counts
            acc[i][1] += esc

    rows = []
    for i, (tau, eps) in enumerate(cells):
        counts, esc, err = acc[i]
        if err is not None:
            log.warning("sweep cell tau=%g eps=%g failed: %s", tau, eps, err)
            rows.append(SweepRow(tau, eps, n, 0, 0, None, None, [], err))
            continue
        cfg = replace(base, tau=tau, eps=eps, max_steps=sc.steps, trials=n)
        res = summarize(cfg, catalog, counts, esc, dis, fav)
        rows.append(
            SweepRow(tau, eps, n, res.in_interval, res.escaped, res.ratio_per_well,
                     res.ratio_total, res.counts)
        )
    return rows


@dataclass(frozen=True)
class Gap:
    tau: float
    width: float
    onset: float | None
    cells: int


def gap_metrics(rows: Sequence[SweepRow], threshold: float = 0.1) -> dict[float, Gap]:
    """Widest contiguous run of eps cells with ratio below ``threshold``.

    Each cell counts for one grid spacing of eps, so the width of a run of
    ``k`` cells is ``k * spacing``; ``onset`` is the run's smallest eps, or
    None without a gap.  Undefined ratios break a run.
    """
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    by_tau: dict[float, list[SweepRow]] = {}
    for r in rows:
        by_tau.setdefault(r.tau, []).append(r)
    out = {}
    for tau, rs in sorted(by_tau.items()):
        rs = sorted(rs, key=lambda r: r.eps)
        spacing = rs[1].eps - rs[0].eps if len(rs) > 1 else 0.0
        best: list[SweepRow] = []
        run: list[SweepRow] = []
        for r in rs:
            if r.ratio_per_well is not None and r.ratio_per_well < threshold:
                run.append(r)
                if len(run) > len(best):
                    best = list(run)
            else:
                run = []
        if best:
            out[tau] = Gap(tau, round(len(best) * spacing, 12), best[0].eps, len(best))
        else:
            out[tau] = Gap(tau, 0.0, None, 0)
    return out
