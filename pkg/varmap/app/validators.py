"""
Input validation utilities for command flags.
"""
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

from app.config import settings


def validate_order(order: int) -> Tuple[bool, Optional[str]]:
    """
    Check a map truncation degree.

    Returns:
        (is_valid, error_message)
    """
    if order < 1:
        return False, f"Map order must be >= 1 (a map needs degree >= 1), got {order}"
    return True, None


def validate_omega_range(omega_min: Optional[float], omega_max: Optional[float],
                         samples: int) -> Tuple[bool, Optional[str]]:
    """Check an omega sweep grid."""
    if omega_min is None or omega_max is None:
        return False, "Both --omega-min and --omega-max are required"
    if omega_min <= 0 or omega_max <= 0:
        return False, "Drive frequencies must be positive"
    if not omega_min < omega_max:
        return False, f"Empty omega range: omega-min ({omega_min}) must be below omega-max ({omega_max})"
    if samples < 2:
        return False, f"A sweep needs at least 2 samples, got {samples}"
    return True, None


def validate_map_source(map_file: Optional[str], exact: bool) -> Tuple[bool, Optional[str]]:
    """Exactly one of a map file and the exact map must be selected."""
    if map_file and exact:
        return False, "Use either --map-file or --exact, not both"
    if not map_file and not exact:
        return False, "Select a map source: --map-file <path> or --exact"
    if map_file and not Path(map_file).is_file():
        return False, f"Map file not found: {map_file}"
    return True, None


def validate_output_path(path: Optional[str]) -> Tuple[bool, Optional[str]]:
    """'-' (standard output) or a file whose directory exists and is writable."""
    if path is None or path == "-":
        return True, None
    target = Path(path)
    if target.is_dir():
        return False, f"Output path is a directory: {path}"
    parent = target.parent if str(target.parent) else Path(".")
    if not parent.is_dir():
        return False, f"Output directory does not exist: {parent}"
    if not os.access(parent, os.W_OK):
        return False, f"Output directory is not writable: {parent}"
    return True, None


def validate_radii(radii: Sequence[float]) -> Tuple[bool, Optional[str]]:
    if not radii:
        return False, "At least one probe radius is required"
    if any(r < 0 for r in radii):
        return False, "Probe radii must be non-negative"
    return True, None


def taylor_range_warning(omegas: Iterable[float], omega_bd: Optional[float],
                         bound: Optional[float] = None) -> Optional[str]:
    """
    Message for omegas that stray from the expansion frequency of a Taylor map.

    Returns None when every omega is within the bound.
    """
    if omega_bd is None:
        return None
    bound = settings.taylor_omega_bound if bound is None else bound
    worst = max((abs(w - omega_bd) for w in omegas), default=0.0)
    if worst > bound:
        return (f"Warning: omega strays {worst:.4g} from the expansion frequency {omega_bd:g} "
                f"(bound {bound:g}); the Taylor map may diverge there")
    return None
