"""
Integration of the complete variational equations in coefficient space.

The design orbit z_d(t) and every Taylor coefficient h_a^r(t) of the
deviation map are advanced together with fixed-step classical RK4. The
result is the truncated transfer map about the design orbit.
"""
import logging
from dataclasses import dataclass, field
from math import log2
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from app.poly import MonomialBasis, PolyMap, PowerTable, TruncatedPoly, get_basis, identity_components

logger = logging.getLogger(__name__)


class NumericalFailure(RuntimeError):
    """A computation produced values that cannot be trusted."""


class IntegrationError(NumericalFailure):
    """Non-finite or invariant-breaking state during an integration."""

    def __init__(self, message: str, time: Optional[float] = None, step: Optional[int] = None,
                 component: Optional[int] = None):
        details = []
        if step is not None:
            details.append(f"step {step}")
        if time is not None:
            details.append(f"t={time:.6g}")
        if component is not None:
            details.append(f"component {component + 1}")
        super().__init__(f"{message} ({', '.join(details)})" if details else message)
        self.time = time
        self.step = step
        self.component = component


@dataclass(frozen=True)
class SystemDefinition:
    """
    An ODE system prepared for the complete variational equations.

    forcing(z_d, t, n) returns one TruncatedPoly per deviation variable
    holding g_a(z_d, t, zeta) = f_a(z_d + zeta, t) - f_a(z_d, t); every
    constant term must be zero. Deviation rows listed in parameter_rows
    have identically zero forcing.
    """
    state_dim: int
    dev_dim: int
    design_rhs: Callable[[np.ndarray, float], np.ndarray]
    forcing: Callable[[np.ndarray, float, int], Sequence[TruncatedPoly]]
    parameter_rows: Tuple[int, ...] = ()
    parameter_values: Tuple[float, ...] = ()
    period: Optional[float] = None
    label: str = ""
    params: Any = None
    time_base: str = "fixed"
    drive_period: Optional[float] = None

    def __post_init__(self):
        if self.state_dim < 1 or self.dev_dim < self.state_dim:
            raise ValueError(f"Need 1 <= state_dim <= dev_dim, got {self.state_dim}, {self.dev_dim}")
        if len(self.parameter_rows) != len(self.parameter_values):
            raise ValueError("Each parameter row needs a design value")
        if len(self.parameter_rows) != self.dev_dim - self.state_dim:
            raise ValueError("Deviation variables beyond the state must all be parameters")


@dataclass
class VariationalState:
    """Design point plus all map coefficients at time t; H[a, r] = h_a^r(t)."""
    t: float
    z_design: np.ndarray
    coefficients: np.ndarray
    basis: MonomialBasis = field(repr=False)

    @classmethod
    def initial(cls, sys: SystemDefinition, z0: Sequence[float], t0: float, n: int) -> "VariationalState":
        """Identity map at t0: zeta(t0) = zeta^i."""
        z = np.array(z0, dtype=np.float64)
        if z.shape != (sys.state_dim,):
            raise ValueError(f"Design point needs {sys.state_dim} coordinates, got shape {z.shape}")
        return cls(t=float(t0), z_design=z, coefficients=identity_components(sys.dev_dim, n),
                   basis=get_basis(sys.dev_dim, n))

    @property
    def H(self) -> List[TruncatedPoly]:
        return [TruncatedPoly(self.basis, row) for row in self.coefficients]


def _forcing_matrix(sys: SystemDefinition, basis: MonomialBasis, z: np.ndarray, t: float) -> np.ndarray:
    terms = sys.forcing(z, t, basis.max_degree)
    if len(terms) != sys.dev_dim:
        raise ValueError(f"Forcing returned {len(terms)} components, expected {sys.dev_dim}")
    G = np.vstack([g.coeffs for g in terms])
    if G.shape != (sys.dev_dim, basis.size):
        raise ValueError(f"Forcing has shape {G.shape}, expected {(sys.dev_dim, basis.size)}")
    if np.any(G[:, 0] != 0.0):
        raise ValueError("Forcing terms must have zero constant coefficient")
    return G


def _rhs(sys: SystemDefinition, basis: MonomialBasis, t: float, z: np.ndarray,
         H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    if not np.all(np.isfinite(z)):
        raise IntegrationError("Non-finite design state", time=t,
                               component=int(np.flatnonzero(~np.isfinite(z))[0]))
    if not np.all(np.isfinite(H)):
        raise IntegrationError("Non-finite map coefficient", time=t,
                               component=int(np.flatnonzero(~np.all(np.isfinite(H), axis=1))[0]))

    dz = np.asarray(sys.design_rhs(z, t), dtype=np.float64)
    G = _forcing_matrix(sys, basis, z, t)
    active = np.flatnonzero(np.any(G != 0.0, axis=0))
    if active.size == 0:
        return dz, np.zeros_like(H)

    table = PowerTable(basis, H)
    products = np.empty((active.size, basis.size))
    for slot, r in enumerate(active):
        products[slot] = table.product(basis.exponents_of(int(r)))
    return dz, G[:, active] @ products


def variational_rhs(sys: SystemDefinition, s: VariationalState) -> Tuple[np.ndarray, List[TruncatedPoly]]:
    """
    Right side of the complete variational equations.

    dH_a = sum_r g_a^r(t) * prod_b H_b^{e_b(r)}, with the sum running only
    over monomials that carry a nonzero forcing coefficient.
    """
    dz, dH = _rhs(sys, s.basis, s.t, s.z_design, s.coefficients)
    return dz, [TruncatedPoly(s.basis, row) for row in dH]


def _check_invariants(sys: SystemDefinition, H: np.ndarray, identity: np.ndarray, step: int, t: float):
    nonzero = np.flatnonzero(H[:, 0] != 0.0)
    if nonzero.size:
        raise IntegrationError("Constant term of the deviation map drifted from zero",
                               time=t, step=step, component=int(nonzero[0]))
    for row in sys.parameter_rows:
        if not np.array_equal(H[row], identity[row]):
            raise IntegrationError("Parameter row is no longer the identity monomial",
                                   time=t, step=step, component=row)


def integrate_state(sys: SystemDefinition, z0: Sequence[float], t0: float, t1: float, n: int,
                    steps: int) -> VariationalState:
    """Advance the joint (design, coefficient) state from t0 to t1 with `steps` RK4 steps."""
    if n < 1:
        raise ValueError(f"Map order must be >= 1, got {n}")
    if steps < 1:
        raise ValueError(f"Step count must be >= 1, got {steps}")
    if t1 < t0:
        raise ValueError(f"Need t1 >= t0, got t0={t0}, t1={t1}")

    state = VariationalState.initial(sys, z0, t0, n)
    if t1 == t0:
        return state

    basis = state.basis
    identity = state.coefficients.copy()
    z, H = state.z_design, state.coefficients
    h = (t1 - t0) / steps

    for i in range(steps):
        t = t0 + i * h
        try:
            dz1, dH1 = _rhs(sys, basis, t, z, H)
            dz2, dH2 = _rhs(sys, basis, t + 0.5 * h, z + 0.5 * h * dz1, H + 0.5 * h * dH1)
            dz3, dH3 = _rhs(sys, basis, t + 0.5 * h, z + 0.5 * h * dz2, H + 0.5 * h * dH2)
            dz4, dH4 = _rhs(sys, basis, t + h, z + h * dz3, H + h * dH3)
        except IntegrationError as e:
            raise IntegrationError(f"Integration aborted: {e}", time=e.time, step=i, component=e.component) from e
        z = z + h / 6.0 * (dz1 + 2.0 * dz2 + 2.0 * dz3 + dz4)
        H = H + h / 6.0 * (dH1 + 2.0 * dH2 + 2.0 * dH3 + dH4)
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(H))):
            raise IntegrationError("Non-finite value after step", time=t + h, step=i)
        _check_invariants(sys, H, identity, i, t + h)

    return VariationalState(t=float(t1), z_design=z, coefficients=H, basis=basis)


def integrate_map(sys: SystemDefinition, z0_design: Sequence[float], t0: float, t1: float, n: int,
                  steps: int) -> PolyMap:
    """
    Build the degree-n transfer map about the design orbit starting at z0_design.

    Args:
        sys: system with its forcing expansion
        z0_design: design initial conditions (state coordinates only)
        t0, t1: integration window in the system's own time variable
        n: truncation degree
        steps: RK4 steps over the window (ignored when t1 == t0)

    Returns:
        PolyMap whose expansion point is (z0_design, parameter design values)
        and whose final point carries z_d(t1)
    """
    logger.debug("Integrating %s from t=%g to t=%g at order %d with %d steps", sys.label, t0, t1, n, steps)
    state = integrate_state(sys, z0_design, t0, t1, n, steps)
    parameters = tuple(float(v) for v in sys.parameter_values)
    return PolyMap(
        components=tuple(state.H),
        expansion_point=tuple(float(v) for v in z0_design) + parameters,
        final_point=tuple(float(v) for v in state.z_design) + parameters,
        drive_period=float(sys.drive_period if sys.drive_period is not None else t1 - t0),
        steps=int(steps),
        params=sys.params,
        parameter_rows=tuple(sys.parameter_rows),
        time_base=sys.time_base,
    )


def refine_by_degree(sys: SystemDefinition, z0_design: Sequence[float], t0: float, t1: float, n: int,
                     steps: int) -> List[Tuple[int, float, float]]:
    """
    Per-degree coefficient change between builds at `steps` and `2*steps`.

    Returns (degree, largest absolute change, that change divided by the
    largest fine-build coefficient of the same degree) for degrees 1..n.
    """
    coarse = integrate_state(sys, z0_design, t0, t1, n, steps).coefficients
    fine_state = integrate_state(sys, z0_design, t0, t1, n, 2 * steps)
    fine = fine_state.coefficients
    degrees = fine_state.basis.degrees
    rows = []
    for d in range(1, n + 1):
        mask = degrees == d
        change = float(np.max(np.abs(coarse[:, mask] - fine[:, mask])))
        scale = float(np.max(np.abs(fine[:, mask])))
        relative = change / scale if scale > 0.0 else (0.0 if change == 0.0 else float("inf"))
        rows.append((d, change, relative))
    return rows


def order_refine_check(sys: SystemDefinition, z0_design: Sequence[float], t0: float, t1: float, n: int,
                       steps: int, relative: bool = False) -> float:
    """
    Largest coefficient change between builds at `steps` and `2*steps`.

    With relative=True each degree's change is scaled by its largest
    coefficient; high-degree coefficients of a strongly driven map reach
    1e9, where double precision alone is worth about 1e-7 absolute.
    """
    rows = refine_by_degree(sys, z0_design, t0, t1, n, steps)
    for degree, change, rel in rows:
        logger.debug("degree %d: change %.3g (relative %.3g)", degree, change, rel)
    return max(rel if relative else change for _, change, rel in rows)


def richardson_slope(sys: SystemDefinition, z0_design: Sequence[float], t0: float, t1: float, n: int,
                     steps: int) -> float:
    """Observed convergence order from builds at steps, 2*steps and 4*steps."""
    coarse = order_refine_check(sys, z0_design, t0, t1, n, steps)
    fine = order_refine_check(sys, z0_design, t0, t1, n, 2 * steps)
    if fine == 0.0:
        return float("inf")
    return log2(coarse / fine)
