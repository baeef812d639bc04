"""
Iteration, fixed points and linear stability of stroboscopic maps.

Both the exact map (RK4 over one drive period) and a truncated Taylor map
are wrapped in a MapHandle with the common signature (q, p, omega) -> (q', p').
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from math import pi
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit

from app.duffing import DuffingParams, TIME_BASES, drive_table, rk4_flow
from app.poly import PolyMap, get_basis
from app.variational import NumericalFailure

logger = logging.getLogger(__name__)

DEFAULT_EXACT_STEPS = 2000
DEFAULT_ESCAPE_RADIUS = 1e3
DEFAULT_PERIOD_TOL = 1e-6
DEFAULT_FD_STEP = 1e-6
DEFAULT_NEWTON_TOL = 1e-10
DEFAULT_NEWTON_MAX_ITER = 50
SINGULAR_DET = 1e-12
MAX_HALVINGS = 10
MIN_STRIDES = 4


class ConvergenceError(NumericalFailure):
    """Newton could not produce a fixed point where one was required."""


@dataclass(frozen=True)
class OrbitSample:
    """Recorded iterates after the transient; truncated at the escape, if any."""
    points: np.ndarray
    escaped: bool = False
    escape_step: Optional[int] = None

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def last(self) -> Optional[Tuple[float, float]]:
        if not len(self):
            return None
        return float(self.points[-1, 0]), float(self.points[-1, 1])


@dataclass(frozen=True)
class FixedPointResult:
    """A fixed point of M^k with the eigenvalues of its k-step Jacobian."""
    location: Tuple[float, float]
    period: int
    stable: bool
    multipliers: Tuple[complex, complex]
    converged: bool
    iterations: int
    omega: float
    residual: float = float("nan")
    diagnostic: Optional[str] = None


@njit(cache=True, nogil=True)
def _exact_orbit(q, p, beta, table, duration, steps, transient, keep, radius):
    points = np.empty((keep, 2))
    count = 0
    for i in range(transient + keep):
        q, p = rk4_flow(q, p, beta, table, duration, steps)
        if not (abs(q) <= radius and abs(p) <= radius):
            return points[:count].copy(), i + 1
        if i >= transient:
            points[count, 0] = q
            points[count, 1] = p
            count += 1
    return points, -1


@njit(cache=True, nogil=True)
def _poly2_values(coeffs, exponents, max_degree, x, y):
    px = np.empty(max_degree + 1)
    py = np.empty(max_degree + 1)
    px[0] = 1.0
    py[0] = 1.0
    for e in range(1, max_degree + 1):
        px[e] = px[e - 1] * x
        py[e] = py[e - 1] * y
    first = 0.0
    second = 0.0
    for r in range(exponents.shape[0]):
        mono = px[exponents[r, 0]] * py[exponents[r, 1]]
        first += coeffs[0, r] * mono
        second += coeffs[1, r] * mono
    return first, second


@njit(cache=True, nogil=True)
def _taylor_orbit(q, p, coeffs, exponents, max_degree, origin_in, origin_out, transient, keep, radius):
    points = np.empty((keep, 2))
    count = 0
    for i in range(transient + keep):
        dq, dp = _poly2_values(coeffs, exponents, max_degree, q - origin_in[0], p - origin_in[1])
        q = origin_out[0] + dq
        p = origin_out[1] + dp
        if not (abs(q) <= radius and abs(p) <= radius):
            return points[:count].copy(), i + 1
        if i >= transient:
            points[count, 0] = q
            points[count, 1] = p
            count += 1
    return points, -1


def _sample(points: np.ndarray, escape: int) -> OrbitSample:
    if escape < 0:
        return OrbitSample(points=points)
    return OrbitSample(points=points, escaped=True, escape_step=int(escape))


class MapHandle(ABC):
    """Common interface of the exact and Taylor stroboscopic maps."""

    kind: str = ""

    @abstractmethod
    def orbit(self, q0: float, p0: float, omega: float, transient: int, keep: int,
              escape_radius: float = DEFAULT_ESCAPE_RADIUS) -> OrbitSample:
        ...

    @abstractmethod
    def jacobian(self, q: float, p: float, omega: float) -> np.ndarray:
        ...

    @abstractmethod
    def describe(self) -> str:
        ...

    def apply(self, q: float, p: float, omega: float) -> Tuple[float, float]:
        """One map application; a non-finite result comes back as (nan, nan)."""
        sample = self.orbit(q, p, omega, 0, 1, np.inf)
        if sample.escaped or not len(sample):
            return float("nan"), float("nan")
        q_next, p_next = sample.last
        if not (np.isfinite(q_next) and np.isfinite(p_next)):
            return float("nan"), float("nan")
        return q_next, p_next

    def __call__(self, q: float, p: float, omega: float) -> Tuple[float, float]:
        return self.apply(q, p, omega)


@dataclass(frozen=True)
class ExactMap(MapHandle):
    """
    Stroboscopic map by direct RK4 integration of the equations of motion.

    time_base "normalized" integrates over the period 2*pi/omega of the
    drive being applied; "fixed" integrates over T_d = 2*pi/omega_d with
    the drive sin(omega*tau), which is the flow a fixed-duration Taylor
    map expands.
    """
    params: DuffingParams
    steps: int = DEFAULT_EXACT_STEPS
    time_base: str = "normalized"
    fd_step: float = DEFAULT_FD_STEP
    kind: str = field(default="exact", init=False)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"Exact map needs at least one RK4 step, got {self.steps}")
        if self.time_base not in TIME_BASES:
            raise ValueError(f"time_base must be one of {TIME_BASES}, got {self.time_base!r}")

    def duration(self, omega: float) -> float:
        return 2 * pi / omega if self.time_base == "normalized" else self.params.period

    def orbit(self, q0, p0, omega, transient, keep, escape_radius=DEFAULT_ESCAPE_RADIUS):
        if omega <= 0:
            raise ValueError(f"Drive frequency must be positive, got {omega}")
        duration = self.duration(omega)
        table = drive_table(self.params.epsilon, omega, duration, self.steps)
        points, escape = _exact_orbit(float(q0), float(p0), self.params.beta, table, duration,
                                      self.steps, int(transient), int(keep), float(escape_radius))
        return _sample(points, escape)

    def jacobian(self, q, p, omega):
        """Central differences of one application with step fd_step."""
        h = self.fd_step
        columns = []
        for dq, dp in ((h, 0.0), (0.0, h)):
            plus = np.array(self.apply(q + dq, p + dp, omega))
            minus = np.array(self.apply(q - dq, p - dp, omega))
            columns.append((plus - minus) / (2 * h))
        return np.column_stack(columns)

    def describe(self) -> str:
        return f"exact map ({self.time_base}, {self.steps} RK4 steps/period)"


@dataclass(frozen=True)
class TaylorMap(MapHandle):
    """
    Polynomial map M_n evaluated in deviation variables.

    zeta = (q - q_bd, p - p_bd, omega - omega_bd); the image is the final
    design point plus the first two components. The parameter variable is
    folded into the coefficients once per omega.
    """
    poly_map: PolyMap
    kind: str = field(default="taylor", init=False)

    def __post_init__(self):
        m, n = self.poly_map.num_vars, self.poly_map.max_degree
        if m not in (2, 3):
            raise ValueError(f"Taylor map handles need 2 or 3 variables, got {m}")
        plane = get_basis(2, n)
        exps = self.poly_map.basis.exponents
        folded = np.array([plane.index_of((int(e[0]), int(e[1]))) for e in exps], dtype=np.int64)
        param_power = exps[:, 2].astype(np.float64) if m == 3 else np.zeros(len(exps))
        object.__setattr__(self, "_plane", plane)
        object.__setattr__(self, "_folded", folded)
        object.__setattr__(self, "_param_power", param_power)
        object.__setattr__(self, "_coeffs", self.poly_map.coefficient_matrix()[:2].copy())

    @property
    def order(self) -> int:
        return self.poly_map.max_degree

    @property
    def expansion_point(self) -> Tuple[float, ...]:
        return self.poly_map.expansion_point

    @property
    def omega_bd(self) -> Optional[float]:
        return self.poly_map.expansion_point[2] if self.poly_map.num_vars == 3 else None

    def plane_coefficients(self, omega: float) -> np.ndarray:
        """Coefficients of (dq', dp') over monomials in (zeta_1, zeta_2) at this omega."""
        zeta3 = 0.0 if self.omega_bd is None else omega - self.omega_bd
        weights = np.power(zeta3, self._param_power)
        out = np.empty((2, self._plane.size))
        for a in range(2):
            out[a] = np.bincount(self._folded, weights=self._coeffs[a] * weights, minlength=self._plane.size)
        return out

    def orbit(self, q0, p0, omega, transient, keep, escape_radius=DEFAULT_ESCAPE_RADIUS):
        coeffs = self.plane_coefficients(omega)
        origin_in = np.array(self.poly_map.expansion_point[:2], dtype=np.float64)
        origin_out = np.array(self.poly_map.final_point[:2], dtype=np.float64)
        points, escape = _taylor_orbit(float(q0), float(p0), coeffs, self._plane.exponents, self.order,
                                       origin_in, origin_out, int(transient), int(keep), float(escape_radius))
        return _sample(points, escape)

    def jacobian(self, q, p, omega):
        """Exact derivative of the polynomial at the deviation of (q, p)."""
        coeffs = self.plane_coefficients(omega)
        values = self._plane.monomial_values((q - self.poly_map.expansion_point[0],
                                              p - self.poly_map.expansion_point[1]))
        J = np.empty((2, 2))
        for a in range(2):
            for b in range(2):
                J[a, b] = self._plane.differentiate(coeffs[a], b) @ values
        return J

    def describe(self) -> str:
        return f"taylor map M_{self.order} about {self.poly_map.expansion_point}"


def apply(map_handle: MapHandle, q: float, p: float, omega: float) -> Tuple[float, float]:
    return map_handle.apply(q, p, omega)


def iterate(map_handle: MapHandle, q0: float, p0: float, omega: float, transient: int, keep: int,
            escape_radius: float = DEFAULT_ESCAPE_RADIUS) -> OrbitSample:
    """
    Discard `transient` iterates, then record `keep` more.

    Leaving the box |q|, |p| <= escape_radius (or going non-finite) stops
    the orbit and flags it as escaped.
    """
    if transient < 0 or keep < 0:
        raise ValueError(f"transient and keep must be >= 0, got {transient}, {keep}")
    return map_handle.orbit(q0, p0, omega, transient, keep, escape_radius)


def jacobian(map_handle: MapHandle, q: float, p: float, omega: float) -> np.ndarray:
    return map_handle.jacobian(q, p, omega)


def detect_period(points: np.ndarray, tol: float = DEFAULT_PERIOD_TOL, max_period: int = 64) -> Optional[int]:
    """
    Smallest k <= max_period with |x[i+k] - x[i]| <= tol for every available i.

    A stride k is only tested when the points hold MIN_STRIDES repeats of
    it (at least (MIN_STRIDES + 1) * k points); longer strides give None.

    Raises:
        ValueError: fewer than 2*max_period points
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if max_period < 1:
        raise ValueError(f"max_period must be >= 1, got {max_period}")
    if len(pts) < 2 * max_period:
        raise ValueError(f"Need at least {2 * max_period} points to test periods up to {max_period}, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        return None
    for k in range(1, max_period + 1):
        if len(pts) < (MIN_STRIDES + 1) * k:
            break
        gaps = np.hypot(pts[k:, 0] - pts[:-k, 0], pts[k:, 1] - pts[:-k, 1])
        if gaps.max() <= tol:
            return k
    return None


def cycle_orbit(map_handle: MapHandle, z: Sequence[float], k: int, omega: float) -> List[Tuple[float, float]]:
    """z, M z, ..., M^(k-1) z."""
    points = [(float(z[0]), float(z[1]))]
    for _ in range(k - 1):
        points.append(map_handle.apply(points[-1][0], points[-1][1], omega))
    return points


def _power_map(map_handle: MapHandle, z: np.ndarray, k: int, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """M^k(z) and its Jacobian by the chain rule along the orbit."""
    J = np.eye(2)
    current = z.copy()
    for _ in range(k):
        J = map_handle.jacobian(current[0], current[1], omega) @ J
        current = np.array(map_handle.apply(current[0], current[1], omega))
        if not np.all(np.isfinite(current)):
            break
    return current, J


def newton_fixed_point(map_handle: MapHandle, k: int, guess: Sequence[float], omega: float,
                       tol: float = DEFAULT_NEWTON_TOL, max_iter: int = DEFAULT_NEWTON_MAX_ITER) -> FixedPointResult:
    """
    Solve M^k(z) = z by damped Newton iteration.

    Full steps are tried first and halved while the residual grows. The
    returned multipliers are the eigenvalues of the k-step Jacobian at the
    final iterate; stable means both lie strictly inside the unit circle.
    """
    if k < 1:
        raise ValueError(f"Period must be >= 1, got {k}")
    z = np.array(guess, dtype=np.float64)
    diagnostic = None
    converged = False
    iterations = 0
    image, J = _power_map(map_handle, z, k, omega)
    residual_vec = image - z
    residual = float(np.linalg.norm(residual_vec))

    while iterations < max_iter:
        if not np.isfinite(residual):
            diagnostic = "orbit left the finite domain"
            break
        if residual <= tol:
            converged = True
            break
        system = J - np.eye(2)
        if abs(np.linalg.det(system)) < SINGULAR_DET:
            diagnostic = f"singular Newton system at ({z[0]:.6g}, {z[1]:.6g})"
            break
        step = np.linalg.solve(system, -residual_vec)
        scale = 1.0
        improved = False
        for _ in range(MAX_HALVINGS + 1):
            trial = z + scale * step
            trial_image, trial_J = _power_map(map_handle, trial, k, omega)
            trial_residual = float(np.linalg.norm(trial_image - trial))
            if np.isfinite(trial_residual) and trial_residual < residual:
                improved = True
                break
            scale *= 0.5
        if not improved:
            diagnostic = f"no residual decrease after {MAX_HALVINGS} step halvings (residual {residual:.3g})"
            break
        z, image, J = trial, trial_image, trial_J
        residual_vec = image - z
        residual = trial_residual
        iterations += 1

    if not converged and diagnostic is None:
        if np.isfinite(residual) and residual <= tol:
            converged = True
        else:
            diagnostic = f"no convergence after {iterations} iterations (residual {residual:.3g})"

    if np.all(np.isfinite(J)):
        eigs = np.linalg.eigvals(J)
        multipliers = (complex(eigs[0]), complex(eigs[1]))
        stable = bool(np.all(np.abs(eigs) < 1.0))
    else:
        multipliers = (complex("nan"), complex("nan"))
        stable = False

    if diagnostic:
        logger.debug("Newton at omega=%g, period %d: %s", omega, k, diagnostic)
    return FixedPointResult(
        location=(float(z[0]), float(z[1])),
        period=k,
        stable=stable,
        multipliers=multipliers,
        converged=converged,
        iterations=iterations,
        omega=float(omega),
        residual=residual,
        diagnostic=diagnostic,
    )
