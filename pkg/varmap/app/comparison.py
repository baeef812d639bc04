"""
Accuracy of Taylor maps against the exact flow they expand.
"""
import logging
from dataclasses import dataclass
from math import cos, pi, sin
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.dynamics import ExactMap, MapHandle, TaylorMap
from app.feigenbaum import SweepConfig, SweepRecord, sweep
from app.poly import PolyMap

logger = logging.getLogger(__name__)

NOISE_FLOOR = 1e-13
PERIOD_THREE_WINDOW = (1.26, 1.27)


@dataclass(frozen=True)
class CompareRow:
    order: int
    radius: float
    max_err: float
    mean_err: float


def probe_points(center: Sequence[float], radius: float, directions: int) -> List[Tuple[float, ...]]:
    """
    Points on a circle of the given radius in (q, p) about center.

    For maps with a frequency variable each circle point is also taken
    with omega shifted by -radius and +radius.
    """
    if directions < 1:
        raise ValueError(f"directions must be >= 1, got {directions}")
    shifts = (0.0, radius, -radius) if len(center) == 3 else (None,)
    points = []
    for j in range(directions):
        angle = 2 * pi * j / directions
        q = center[0] + radius * cos(angle)
        p = center[1] + radius * sin(angle)
        for shift in shifts:
            points.append((q, p) if shift is None else (q, p, center[2] + shift))
    return points


def _check_compatible(maps: Sequence[PolyMap]):
    first = maps[0]
    for other in maps[1:]:
        if other.expansion_point != first.expansion_point:
            raise ValueError(
                f"Map files have mismatched expansion points: {first.expansion_point} vs {other.expansion_point}"
            )
        if other.params != first.params:
            raise ValueError("Map files were built with different equation parameters")
        if other.time_base != first.time_base:
            raise ValueError(f"Map files use different time bases: {first.time_base} vs {other.time_base}")
    if first.params is None:
        raise ValueError("Map file carries no equation parameters; cannot build the exact map")


def compare_maps(maps: Sequence[PolyMap], radii: Sequence[float], directions: int,
                 exact_steps: Optional[int] = None) -> List[CompareRow]:
    """
    Max and mean distance between Taylor and exact images per (order, radius).

    The exact map integrates with the map's own build step count and time
    base unless exact_steps is given, so that at radius 0 the two agree to
    round-off.
    """
    if not maps:
        raise ValueError("At least one map is required")
    _check_compatible(maps)

    exact_images: Dict[Tuple[int, float], np.ndarray] = {}
    rows = []
    for poly_map in sorted(maps, key=lambda pm: pm.max_degree):
        taylor = TaylorMap(poly_map)
        steps = exact_steps or poly_map.steps
        exact = ExactMap(poly_map.params, steps=steps, time_base=poly_map.time_base)
        for radius in radii:
            probes = probe_points(poly_map.expansion_point, radius, directions)
            key = (steps, radius)
            if key not in exact_images:
                exact_images[key] = np.array([exact.apply(z[0], z[1], _omega_of(z, poly_map)) for z in probes])
            reference = exact_images[key]
            images = np.array([taylor.apply(z[0], z[1], _omega_of(z, poly_map)) for z in probes])
            errors = np.hypot(images[:, 0] - reference[:, 0], images[:, 1] - reference[:, 1])
            rows.append(CompareRow(order=poly_map.max_degree, radius=float(radius),
                                   max_err=float(np.max(errors)), mean_err=float(np.mean(errors))))
            logger.debug("order %d radius %g: max %.3e mean %.3e", poly_map.max_degree, radius,
                         rows[-1].max_err, rows[-1].mean_err)
    return rows


def _omega_of(z: Sequence[float], poly_map: PolyMap) -> float:
    return z[2] if len(z) == 3 else poly_map.params.omega_d


def fit_slopes(rows: Sequence[CompareRow], floor: float = NOISE_FLOOR) -> Dict[int, float]:
    """
    Log-log slope of max error against radius, per order.

    Errors at or below floor are round-off and left out; an order with
    fewer than two usable radii gets nan.
    """
    slopes = {}
    for order in sorted({row.order for row in rows}):
        usable = [row for row in rows if row.order == order and row.radius > 0 and row.max_err > floor]
        if len(usable) < 2:
            slopes[order] = float("nan")
            continue
        x = np.log([row.radius for row in usable])
        y = np.log([row.max_err for row in usable])
        slopes[order] = float(np.polyfit(x, y, 1)[0])
    return slopes


def period_three_omegas(records: Sequence[SweepRecord],
                        window: Tuple[float, float] = PERIOD_THREE_WINDOW) -> List[float]:
    """Omegas inside window whose steady state has period 3."""
    lo, hi = window
    return [r.omega for r in records if r.period == 3 and lo <= r.omega <= hi]


def log_period_three(records: Sequence[SweepRecord], label: str):
    """Report on the summary channel whether period 3 shows up near omega 1.265."""
    found = period_three_omegas(records)
    lo, hi = PERIOD_THREE_WINDOW
    if found:
        logger.info("%s: period 3 present in [%g, %g] at %d omegas (first %g)", label, lo, hi, len(found), found[0])
    elif any(lo <= r.omega <= hi for r in records):
        logger.info("%s: no period 3 in [%g, %g]", label, lo, hi)


def period_three_scan(map_handle: MapHandle, seed: Tuple[float, float], transient: int, keep: int,
                      samples: int = 41) -> List[SweepRecord]:
    """Short continuation sweep over the period-three window."""
    lo, hi = PERIOD_THREE_WINDOW
    cfg = SweepConfig(omega_min=lo, omega_max=hi, samples=samples, transient=transient, keep=keep,
                      seed=seed, period_max=max(1, min(64, keep // 2)))
    return sweep(cfg, map_handle)
