"""
Data behind Feigenbaum diagrams, unstable-branch trails and attractor clouds.
"""
import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.dynamics import (
    DEFAULT_ESCAPE_RADIUS,
    DEFAULT_NEWTON_MAX_ITER,
    DEFAULT_NEWTON_TOL,
    DEFAULT_PERIOD_TOL,
    MIN_STRIDES,
    ConvergenceError,
    FixedPointResult,
    MapHandle,
    OrbitSample,
    detect_period,
    iterate,
    newton_fixed_point,
)
from app.workers import run_parallel

logger = logging.getLogger(__name__)

DEFAULT_SEED = (1.26082, 2.05452)
SEED_OFFSET = 1e-9

Window = Tuple[float, float, float, float]


class SweepConfig(BaseModel):
    """Grid and steady-state protocol of one omega sweep."""
    model_config = ConfigDict(frozen=True)

    omega_min: float = Field(gt=0.0)
    omega_max: float = Field(gt=0.0)
    samples: int = Field(ge=2)
    transient: int = Field(2000, ge=0)
    keep: int = Field(256, ge=0)
    seed_mode: Literal["continuation", "fixed_seed"] = "continuation"
    seed: Tuple[float, float] = DEFAULT_SEED
    direction: Literal["up", "down"] = "up"
    period_max: int = Field(64, ge=1)
    period_tol: float = Field(DEFAULT_PERIOD_TOL, gt=0.0)
    escape_radius: float = Field(DEFAULT_ESCAPE_RADIUS, gt=0.0)

    @model_validator(mode="after")
    def _check_range(self):
        if not self.omega_min < self.omega_max:
            raise ValueError(f"omega_min ({self.omega_min}) must be below omega_max ({self.omega_max})")
        return self

    def grid(self) -> np.ndarray:
        """Uniform omega grid in sweep order."""
        omegas = np.linspace(self.omega_min, self.omega_max, self.samples)
        return omegas if self.direction == "up" else omegas[::-1].copy()


@dataclass(frozen=True)
class SweepRecord:
    """Steady-state sample at one omega."""
    omega: float
    kept_points: np.ndarray
    period: Optional[int]
    escaped: bool
    seed: Tuple[float, float]

    @property
    def mean_q(self) -> float:
        return float(np.mean(self.kept_points[:, 0])) if len(self.kept_points) else float("nan")


class AttractorConfig(BaseModel):
    """Long-orbit protocol for a phase portrait, optionally restricted to a zoom window."""
    model_config = ConfigDict(frozen=True)

    omega: float = Field(gt=0.0)
    transient: int = Field(10000, ge=0)
    keep: int = Field(200000, ge=0)
    window: Optional[Window] = None
    seed: Tuple[float, float] = DEFAULT_SEED
    escape_radius: float = Field(DEFAULT_ESCAPE_RADIUS, gt=0.0)

    @model_validator(mode="after")
    def _check_window(self):
        if self.window is not None:
            q_lo, q_hi, p_lo, p_hi = self.window
            if not (q_lo < q_hi and p_lo < p_hi):
                raise ValueError(f"Window must be (q_lo, q_hi, p_lo, p_hi) with lo < hi, got {self.window}")
        return self


def _steady_record(cfg: SweepConfig, map_handle: MapHandle, omega: float,
                   seed: Tuple[float, float]) -> SweepRecord:
    sample = iterate(map_handle, seed[0], seed[1], omega, cfg.transient, cfg.keep, cfg.escape_radius)
    period = None
    max_period = min(cfg.period_max, cfg.keep // (MIN_STRIDES + 1))
    if not sample.escaped and max_period >= 1:
        period = detect_period(sample.points, cfg.period_tol, max_period)
    return SweepRecord(omega=float(omega), kept_points=sample.points, period=period,
                       escaped=sample.escaped, seed=(float(seed[0]), float(seed[1])))


def _next_seed(record: SweepRecord, seed: Tuple[float, float]) -> Tuple[float, float]:
    if record.escaped or not len(record.kept_points):
        return seed
    last = record.kept_points[-1]
    return float(last[0]), float(last[1])


def _continuation_chunk(cfg: SweepConfig, map_handle: MapHandle, omegas: Sequence[float],
                        seed: Tuple[float, float]) -> List[SweepRecord]:
    records = []
    for omega in omegas:
        record = _steady_record(cfg, map_handle, omega, seed)
        records.append(record)
        seed = _next_seed(record, seed)
    return records


def sweep(cfg: SweepConfig, map_handle: MapHandle, threads: int = 1) -> List[SweepRecord]:
    """
    Steady-state samples over the omega grid, in sweep direction order.

    Continuation seeds each omega from the last non-escaped point of the
    previous one. With threads > 1 the grid is cut into contiguous chunks
    whose seeds come from a coarse sequential pass over the chunk starts;
    the output is deterministic for a given thread count.
    """
    omegas = cfg.grid()
    logger.info("Sweeping %d omega values in [%g, %g] (%s, %s) with %s",
                len(omegas), cfg.omega_min, cfg.omega_max, cfg.direction, cfg.seed_mode, map_handle.describe())

    if cfg.seed_mode == "fixed_seed":
        records = run_parallel(lambda w: _steady_record(cfg, map_handle, w, cfg.seed), list(omegas), threads)
    elif threads <= 1:
        records = _continuation_chunk(cfg, map_handle, omegas, cfg.seed)
    else:
        chunks = [c for c in np.array_split(omegas, min(threads, len(omegas))) if len(c)]
        seeds = []
        seed = cfg.seed
        for index, chunk in enumerate(chunks):
            if index:
                coarse = iterate(map_handle, seed[0], seed[1], chunk[0], cfg.transient, 1, cfg.escape_radius)
                if not coarse.escaped and len(coarse):
                    seed = coarse.last
            seeds.append(seed)
        parts = run_parallel(lambda job: _continuation_chunk(cfg, map_handle, job[0], job[1]),
                             list(zip(chunks, seeds)), threads)
        records = [r for part in parts for r in part]

    if records and all(r.escaped for r in records):
        logger.warning("Warning: every omega sample escaped (radius %g); check the seed and map domain",
                       cfg.escape_radius)
    detected = sorted({r.period for r in records if r.period is not None})
    logger.info("Sweep done: %d records, %d escaped, periods seen %s",
                len(records), sum(r.escaped for r in records), detected)
    return records


def unstable_trail(omegas: Sequence[float], k: int, guess: Sequence[float], map_handle: MapHandle,
                   tol: float = DEFAULT_NEWTON_TOL,
                   max_iter: int = DEFAULT_NEWTON_MAX_ITER) -> List[FixedPointResult]:
    """
    Newton continuation of a period-k fixed point along the omega grid.

    Each solve starts from the previous solution. The trail ends at the
    first failure (branch end or bifurcation).

    Raises:
        ConvergenceError: the first grid point does not converge
    """
    omegas = list(omegas)
    if not omegas:
        return []
    trail: List[FixedPointResult] = []
    z = (float(guess[0]), float(guess[1]))
    for omega in omegas:
        result = newton_fixed_point(map_handle, k, z, omega, tol, max_iter)
        if not result.converged:
            if not trail:
                raise ConvergenceError(
                    f"Newton failed at the first trail point omega={omega:g}: {result.diagnostic}"
                )
            logger.info("Trail ends at omega=%g: %s", omega, result.diagnostic)
            break
        trail.append(result)
        z = result.location
    return trail


def trail_both_ways(omegas: Sequence[float], start: int, k: int, guess: Sequence[float],
                    map_handle: MapHandle, tol: float = DEFAULT_NEWTON_TOL,
                    max_iter: int = DEFAULT_NEWTON_MAX_ITER) -> List[FixedPointResult]:
    """Continue from grid index `start` both down and up, merged in grid order."""
    omegas = list(omegas)
    if not 0 <= start < len(omegas):
        raise ValueError(f"Start index {start} outside the grid of {len(omegas)} points")
    upward = unstable_trail(omegas[start:], k, guess, map_handle, tol, max_iter)
    downward = unstable_trail(omegas[start::-1], k, upward[0].location, map_handle, tol, max_iter)
    return list(reversed(downward[1:])) + upward


def attractor_cloud(cfg: AttractorConfig, map_handle: MapHandle, workers: int = 1) -> OrbitSample:
    """
    Long orbit after a transient, filtered to cfg.window when one is given.

    With workers > 1 the kept points are split across workers; worker w
    starts from the seed shifted by w*1e-9 in q and runs its own transient.
    """
    if workers <= 1 or cfg.keep < workers:
        sample = iterate(map_handle, cfg.seed[0], cfg.seed[1], cfg.omega, cfg.transient, cfg.keep,
                         cfg.escape_radius)
    else:
        shares = [len(part) for part in np.array_split(np.arange(cfg.keep), workers)]
        jobs = [(w, share) for w, share in enumerate(shares)]
        parts = run_parallel(
            lambda job: iterate(map_handle, cfg.seed[0] + SEED_OFFSET * job[0], cfg.seed[1], cfg.omega,
                                cfg.transient, job[1], cfg.escape_radius),
            jobs, workers,
        )
        escaped = [part for part in parts if part.escaped]
        points = np.vstack([part.points for part in parts])
        sample = OrbitSample(points=points, escaped=bool(escaped),
                             escape_step=escaped[0].escape_step if escaped else None)

    if sample.escaped:
        if sample.escape_step is not None and sample.escape_step <= cfg.transient:
            logger.warning("Warning: orbit escaped during the transient at step %d (omega=%g)",
                           sample.escape_step, cfg.omega)
            return OrbitSample(points=np.empty((0, 2)), escaped=True, escape_step=sample.escape_step)
        logger.warning("Warning: orbit escaped at step %d (omega=%g); cloud truncated",
                       sample.escape_step, cfg.omega)

    if cfg.window is None:
        return sample
    q_lo, q_hi, p_lo, p_hi = cfg.window
    pts = sample.points
    mask = (pts[:, 0] >= q_lo) & (pts[:, 0] <= q_hi) & (pts[:, 1] >= p_lo) & (pts[:, 1] <= p_hi)
    return OrbitSample(points=pts[mask], escaped=sample.escaped, escape_step=sample.escape_step)


def period_transitions(records: Sequence[SweepRecord]) -> List[Tuple[float, Optional[int], Optional[int]]]:
    """(omega, previous period, new period) wherever the detected period changes."""
    changes = []
    for before, after in zip(records, records[1:]):
        if before.period != after.period:
            changes.append((after.omega, before.period, after.period))
    return changes


def first_transition(records: Sequence[SweepRecord], old: int, new: int) -> Optional[float]:
    """Midpoint omega of the first old -> new period change, or None."""
    for before, after in zip(records, records[1:]):
        if before.period == old and after.period == new:
            return 0.5 * (before.omega + after.omega)
    return None


def branch_jumps(records: Sequence[SweepRecord], min_jump: float) -> List[float]:
    """Omegas (midpoints) where the mean steady-state q jumps by more than min_jump."""
    jumps = []
    for before, after in zip(records, records[1:]):
        if before.escaped or after.escaped:
            continue
        if abs(after.mean_q - before.mean_q) > min_jump:
            jumps.append(0.5 * (before.omega + after.omega))
    return jumps


def bounding_box(points: np.ndarray) -> Window:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if not len(pts):
        raise ValueError("Bounding box of an empty cloud")
    return (float(pts[:, 0].min()), float(pts[:, 0].max()), float(pts[:, 1].min()), float(pts[:, 1].max()))


def cloud_distance(a: np.ndarray, b: np.ndarray, bins: int = 64, box: Optional[Window] = None) -> float:
    """Total-variation distance between normalized occupancy histograms of two clouds."""
    if box is None:
        ba, bb = bounding_box(a), bounding_box(b)
        box = (min(ba[0], bb[0]), max(ba[1], bb[1]), min(ba[2], bb[2]), max(ba[3], bb[3]))
    q_lo, q_hi, p_lo, p_hi = box
    edges = (np.linspace(q_lo, q_hi, bins + 1), np.linspace(p_lo, p_hi, bins + 1))
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=edges)
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=edges)
    return 0.5 * float(np.abs(ha / ha.sum() - hb / hb.sum()).sum())
