"""
Scaled driven Duffing oscillator with the drive frequency as a third deviation variable.

    q' = p
    p' = -2*beta*p - q - q**3 - epsilon*sin(omega*tau)

The drive phase psi is frozen at pi/2, so the drive vanishes at the
stroboscopic times tau = n*T.
"""
from functools import lru_cache
from math import factorial, pi
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.poly import TruncatedPoly, get_basis
from app.variational import SystemDefinition

TIME_BASES = ("normalized", "fixed")

# Component indices of the deviation vector (zeta_1, zeta_2, zeta_3).
Q, P, OMEGA = 0, 1, 2


class DuffingParams(BaseModel):
    """Knobs of the scaled equation of motion."""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(0.1, ge=0.0)
    epsilon: float = 25.0
    omega_d: float = Field(1.285, gt=0.0)

    @field_validator("beta", "epsilon", "omega_d")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("must be finite")
        return v

    @property
    def psi(self) -> float:
        return pi / 2

    @property
    def period(self) -> float:
        """Drive period T = 2*pi/omega_d."""
        return 2 * pi / self.omega_d


class ExpansionPoint(BaseModel):
    """Initial conditions of the design solution, plus its drive frequency."""
    model_config = ConfigDict(frozen=True)

    q_bd: float = 1.26082
    p_bd: float = 2.05452
    omega_bd: float = Field(1.285, gt=0.0)

    @field_validator("q_bd", "p_bd", "omega_bd")
    @classmethod
    def _finite(cls, v: float) -> float:
        if not np.isfinite(v):
            raise ValueError("must be finite")
        return v

    def as_array(self) -> np.ndarray:
        return np.array([self.q_bd, self.p_bd, self.omega_bd])


def duffing_rhs(z: Sequence[float], tau: float, params: DuffingParams,
                omega_override: Optional[float] = None) -> np.ndarray:
    """Vector field (dq, dp) at time tau; omega_override replaces omega_d in the drive."""
    q, p = float(z[0]), float(z[1])
    omega = params.omega_d if omega_override is None else omega_override
    return np.array([
        p,
        -2.0 * params.beta * p - q - q ** 3 - params.epsilon * np.sin(omega * tau),
    ])


def duffing_rhs_normalized(z: Sequence[float], theta: float, params: DuffingParams,
                           omega: Optional[float] = None) -> np.ndarray:
    """Vector field in phase time theta = omega*tau, one period is theta in [0, 2*pi]."""
    q, p = float(z[0]), float(z[1])
    omega = params.omega_d if omega is None else omega
    force = -2.0 * params.beta * p - q - q ** 3 - params.epsilon * np.sin(theta)
    return np.array([p / omega, force / omega])


def _deviation_force(basis, q_d: float, beta: float) -> np.ndarray:
    """Coefficients of F(z_d + zeta) - F(z_d) without the drive."""
    coeffs = np.zeros(basis.size)
    n = basis.max_degree
    coeffs[basis.index_of((1, 0, 0))] = -(1.0 + 3.0 * q_d * q_d)
    coeffs[basis.index_of((0, 1, 0))] = -2.0 * beta
    if n >= 2:
        coeffs[basis.index_of((2, 0, 0))] = -3.0 * q_d
    if n >= 3:
        coeffs[basis.index_of((3, 0, 0))] = -1.0
    return coeffs


def duffing_forcing(z_d: Sequence[float], tau: float, params: DuffingParams, n: int) -> List[TruncatedPoly]:
    """
    Forcing terms g_a(z_d, tau, zeta) for the fixed-duration expansion.

    The drive sin((omega_d + zeta_3)*tau) is expanded through zeta_3**n
    with sin(omega_d*tau + k*pi/2) as the k-th derivative factor.
    Component 3 is identically zero since zeta_3 is a parameter.
    """
    if n < 1:
        raise ValueError(f"Forcing needs order n >= 1, got {n}")
    basis = get_basis(3, n)
    q_d = float(z_d[0])

    g1 = np.zeros(basis.size)
    g1[basis.index_of((0, 1, 0))] = 1.0

    g2 = _deviation_force(basis, q_d, params.beta)
    for k in range(1, n + 1):
        g2[basis.index_of((0, 0, k))] = (
            -params.epsilon * tau ** k / factorial(k) * np.sin(params.omega_d * tau + k * pi / 2)
        )

    return [TruncatedPoly(basis, g1), TruncatedPoly(basis, g2), TruncatedPoly(basis)]


@lru_cache(maxsize=64)
def _normalized_factors(omega_d: float, n: int) -> Tuple[np.ndarray, ...]:
    # u = 1/(omega_d + zeta_3) as a series; shifted = u - 1/omega_d
    basis = get_basis(3, n)
    u = np.zeros(basis.size)
    for k in range(n + 1):
        u[basis.index_of((0, 0, k))] = (-1.0) ** k / omega_d ** (k + 1)
    shifted = u.copy()
    shifted[0] = 0.0

    def times_u(exponents):
        mono = np.zeros(basis.size)
        if sum(exponents) <= n:
            mono[basis.index_of(exponents)] = 1.0
        return basis.multiply(mono, u)

    factors = (shifted, times_u((1, 0, 0)), times_u((0, 1, 0)), times_u((2, 0, 0)), times_u((3, 0, 0)))
    for f in factors:
        f.setflags(write=False)
    return factors


def duffing_forcing_normalized(z_d: Sequence[float], theta: float, params: DuffingParams,
                               n: int) -> List[TruncatedPoly]:
    """
    Forcing terms in phase time theta, where one drive period is always 2*pi.

    With u = 1/(omega_d + zeta_3):
        g1 = p_d*(u - 1/omega_d) + zeta_2*u
        g2 = F_d*(u - 1/omega_d) + (F(z_d + zeta) - F_d)*u
    """
    if n < 1:
        raise ValueError(f"Forcing needs order n >= 1, got {n}")
    basis = get_basis(3, n)
    q_d, p_d = float(z_d[0]), float(z_d[1])
    shifted, q_u, p_u, q2_u, q3_u = _normalized_factors(float(params.omega_d), n)
    beta = params.beta

    f_d = -2.0 * beta * p_d - q_d - q_d ** 3 - params.epsilon * np.sin(theta)
    g1 = p_d * shifted + p_u
    g2 = (
        f_d * shifted
        - (1.0 + 3.0 * q_d * q_d) * q_u
        - 2.0 * beta * p_u
        - 3.0 * q_d * q2_u
        - q3_u
    )
    return [TruncatedPoly(basis, g1), TruncatedPoly(basis, g2), TruncatedPoly(basis)]


def duffing_system(params: DuffingParams, n: int, time_base: str = "normalized") -> SystemDefinition:
    """
    SystemDefinition for the Duffing stroboscopic map with omega as zeta_3.

    time_base "normalized" integrates over theta in [0, 2*pi] so the map at
    omega_d + zeta_3 covers exactly one period of that drive; "fixed"
    integrates over tau in [0, T_d] with the drive frequency expanded.
    """
    if time_base not in TIME_BASES:
        raise ValueError(f"time_base must be one of {TIME_BASES}, got {time_base!r}")
    if n < 1:
        raise ValueError(f"Map order must be >= 1, got {n}")

    if time_base == "normalized":
        design_rhs = lambda z, t: duffing_rhs_normalized(z, t, params)
        forcing = lambda z, t, order: duffing_forcing_normalized(z, t, params, order)
        span = 2 * pi
    else:
        design_rhs = lambda z, t: duffing_rhs(z, t, params)
        forcing = lambda z, t, order: duffing_forcing(z, t, params, order)
        span = params.period

    return SystemDefinition(
        state_dim=2,
        dev_dim=3,
        design_rhs=design_rhs,
        forcing=forcing,
        parameter_rows=(OMEGA,),
        parameter_values=(params.omega_d,),
        period=span,
        label=f"duffing[{time_base}] beta={params.beta} epsilon={params.epsilon} omega_d={params.omega_d}",
        params=params,
        time_base=time_base,
        drive_period=params.period,
    )


@njit(cache=True, nogil=True)
def drive_table(epsilon, omega, duration, steps):
    """epsilon*sin(omega*tau) at every RK4 node tau = j*h/2."""
    half = 0.5 * duration / steps
    out = np.empty(2 * steps + 1)
    for j in range(2 * steps + 1):
        out[j] = epsilon * np.sin(omega * (j * half))
    return out


@njit(cache=True, nogil=True)
def rk4_flow(q, p, beta, table, duration, steps):
    """One pass of classical RK4 over [0, duration] using a precomputed drive table."""
    h = duration / steps
    two_beta = 2.0 * beta
    for i in range(steps):
        d0 = table[2 * i]
        d1 = table[2 * i + 1]
        d2 = table[2 * i + 2]

        k1q = p
        k1p = -two_beta * p - q - q * q * q - d0

        qa = q + 0.5 * h * k1q
        pa = p + 0.5 * h * k1p
        k2q = pa
        k2p = -two_beta * pa - qa - qa * qa * qa - d1

        qb = q + 0.5 * h * k2q
        pb = p + 0.5 * h * k2p
        k3q = pb
        k3p = -two_beta * pb - qb - qb * qb * qb - d1

        qc = q + h * k3q
        pc = p + h * k3p
        k4q = pc
        k4p = -two_beta * pc - qc - qc * qc * qc - d2

        q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        p = p + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
    return q, p
