"""
Dense truncated multivariate polynomials over a graded-lex monomial basis.
"""
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from math import comb
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union, TYPE_CHECKING

import numpy as np
from numba import njit

if TYPE_CHECKING:
    from app.duffing import DuffingParams

_INDEX_LIMIT = np.iinfo(np.int64).max

Exponents = Tuple[int, ...]


def count_monomials(m: int, n: int) -> int:
    """Number of monomials of degree 0..n in m variables, C(m+n, n)."""
    if m < 1 or n < 0:
        raise ValueError(f"count_monomials needs m >= 1 and n >= 0, got m={m}, n={n}")
    total = comb(m + n, n)
    if total > _INDEX_LIMIT:
        raise OverflowError(f"L({m},{n}) = {total} does not fit a 64-bit index")
    return total


def _compositions(degree: int, m: int) -> Iterator[Exponents]:
    # Descending lex within a degree, so x_1 comes before x_2.
    if m == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _compositions(degree - first, m - 1):
            yield (first,) + rest


@njit(cache=True, nogil=True)
def _mul_kernel(p, q, pair_i, pair_j, pair_k, out):
    out[:] = 0.0
    for t in range(pair_i.shape[0]):
        out[pair_k[t]] += p[pair_i[t]] * q[pair_j[t]]
    return out


@njit(cache=True, nogil=True)
def _monomial_values(x, exponents, max_degree):
    m = x.shape[0]
    powers = np.empty((m, max_degree + 1))
    for b in range(m):
        powers[b, 0] = 1.0
        for e in range(1, max_degree + 1):
            powers[b, e] = powers[b, e - 1] * x[b]
    size = exponents.shape[0]
    out = np.empty(size)
    for r in range(size):
        value = 1.0
        for b in range(m):
            value *= powers[b, exponents[r, b]]
        out[r] = value
    return out


class MonomialBasis:
    """
    Canonical labeling of the monomials of degree <= n in m variables.

    Index 0 is the constant monomial, indices 1..m are the variables in
    order, and every degree block is contiguous. The product and
    derivative tables are built once per (m, n) and shared read-only.
    """

    def __init__(self, num_vars: int, max_degree: int):
        self.num_vars = num_vars
        self.max_degree = max_degree
        self.size = count_monomials(num_vars, max_degree)

        exponent_list: List[Exponents] = []
        for degree in range(max_degree + 1):
            exponent_list.extend(_compositions(degree, num_vars))

        self._index: Dict[Exponents, int] = {e: r for r, e in enumerate(exponent_list)}
        self.exponents = np.array(exponent_list, dtype=np.int64).reshape(self.size, num_vars)
        self.exponents.setflags(write=False)
        self.degrees = self.exponents.sum(axis=1)
        self.degrees.setflags(write=False)
        # block_end[d] = number of monomials of degree <= d
        self.block_end = np.array(
            [count_monomials(num_vars, d) for d in range(max_degree + 1)], dtype=np.int64
        )

        self.pair_i, self.pair_j, self.pair_k = self._build_product_table(exponent_list)
        self._diff_tables = [self._build_diff_table(b) for b in range(num_vars)]

    def _build_product_table(self, exponent_list: List[Exponents]):
        pair_i, pair_j, pair_k = [], [], []
        for i, ei in enumerate(exponent_list):
            room = self.max_degree - int(self.degrees[i])
            for j in range(int(self.block_end[room])):
                ej = exponent_list[j]
                pair_i.append(i)
                pair_j.append(j)
                pair_k.append(self._index[tuple(a + b for a, b in zip(ei, ej))])
        as_array = lambda values: np.array(values, dtype=np.int64)
        return as_array(pair_i), as_array(pair_j), as_array(pair_k)

    def _build_diff_table(self, var: int):
        sources, targets, factors = [], [], []
        for r in range(self.size):
            power = int(self.exponents[r, var])
            if power == 0:
                continue
            lowered = list(self.exponents[r])
            lowered[var] -= 1
            sources.append(r)
            targets.append(self._index[tuple(int(v) for v in lowered)])
            factors.append(float(power))
        return (
            np.array(sources, dtype=np.int64),
            np.array(targets, dtype=np.int64),
            np.array(factors, dtype=np.float64),
        )

    def index_of(self, exponents: Sequence[int]) -> int:
        """Flat index of a monomial given its exponent vector."""
        key = tuple(int(e) for e in exponents)
        if len(key) != self.num_vars:
            raise ValueError(f"Expected {self.num_vars} exponents, got {len(key)}")
        if any(e < 0 for e in key):
            raise ValueError(f"Exponents must be non-negative: {key}")
        if sum(key) > self.max_degree:
            raise IndexError(f"Monomial {key} has degree {sum(key)} > {self.max_degree}")
        return self._index[key]

    def exponents_of(self, r: int) -> Exponents:
        """Exponent vector of the monomial with flat index r."""
        if not 0 <= r < self.size:
            raise IndexError(f"Monomial index {r} outside [0, {self.size})")
        return tuple(int(e) for e in self.exponents[r])

    def multiply(self, p: np.ndarray, q: np.ndarray) -> np.ndarray:
        return _mul_kernel(p, q, self.pair_i, self.pair_j, self.pair_k, np.empty(self.size))

    def differentiate(self, coeffs: np.ndarray, var: int) -> np.ndarray:
        sources, targets, factors = self._diff_tables[var]
        out = np.zeros(self.size)
        out[targets] = coeffs[sources] * factors
        return out

    def monomial_values(self, x: Sequence[float]) -> np.ndarray:
        point = np.asarray(x, dtype=np.float64)
        if point.shape != (self.num_vars,):
            raise ValueError(f"Expected a point with {self.num_vars} coordinates, got shape {point.shape}")
        return _monomial_values(point, self.exponents, self.max_degree)

    def __repr__(self) -> str:
        return f"MonomialBasis(num_vars={self.num_vars}, max_degree={self.max_degree}, size={self.size})"


@lru_cache(maxsize=None)
def get_basis(num_vars: int, max_degree: int) -> MonomialBasis:
    """Shared basis for (m, n); tables are built on first use."""
    if num_vars < 1 or max_degree < 0:
        raise ValueError(f"Invalid basis shape m={num_vars}, n={max_degree}")
    return MonomialBasis(num_vars, max_degree)


def index_of(exponents: Sequence[int], max_degree: int) -> int:
    return get_basis(len(exponents), max_degree).index_of(exponents)


def exponents_of(r: int, num_vars: int, max_degree: int) -> Exponents:
    return get_basis(num_vars, max_degree).exponents_of(r)


class TruncatedPoly:
    """
    Immutable polynomial in m variables truncated at degree n.

    coeffs[r] multiplies the monomial with flat index r of the shared
    MonomialBasis; all arithmetic keeps the operands' (m, n).
    """

    __slots__ = ("basis", "coeffs")

    def __init__(self, basis: MonomialBasis, coeffs: Optional[Sequence[float]] = None):
        if coeffs is None:
            values = np.zeros(basis.size)
        else:
            values = np.array(coeffs, dtype=np.float64)
        if values.shape != (basis.size,):
            raise ValueError(f"Expected {basis.size} coefficients for {basis}, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "coeffs", values)

    def __setattr__(self, name, value):
        raise AttributeError("TruncatedPoly is immutable")

    @classmethod
    def zero(cls, num_vars: int, max_degree: int) -> "TruncatedPoly":
        return cls(get_basis(num_vars, max_degree))

    @classmethod
    def constant(cls, num_vars: int, max_degree: int, value: float) -> "TruncatedPoly":
        basis = get_basis(num_vars, max_degree)
        coeffs = np.zeros(basis.size)
        coeffs[0] = value
        return cls(basis, coeffs)

    @classmethod
    def variable(cls, num_vars: int, max_degree: int, var: int) -> "TruncatedPoly":
        """The degree-one monomial x_var (requires n >= 1)."""
        basis = get_basis(num_vars, max_degree)
        coeffs = np.zeros(basis.size)
        coeffs[1 + var] = 1.0
        return cls(basis, coeffs)

    @classmethod
    def from_terms(cls, num_vars: int, max_degree: int, terms: Mapping[Exponents, float]) -> "TruncatedPoly":
        """Build from {exponents: coefficient}; terms above degree n are dropped."""
        basis = get_basis(num_vars, max_degree)
        coeffs = np.zeros(basis.size)
        for exps, value in terms.items():
            if sum(exps) > max_degree:
                continue
            coeffs[basis.index_of(exps)] += value
        return cls(basis, coeffs)

    @property
    def num_vars(self) -> int:
        return self.basis.num_vars

    @property
    def max_degree(self) -> int:
        return self.basis.max_degree

    def degree(self) -> int:
        """Highest degree with a nonzero coefficient, -1 for the zero polynomial."""
        nonzero = np.flatnonzero(self.coeffs)
        return int(self.basis.degrees[nonzero[-1]]) if nonzero.size else -1

    def terms(self) -> Dict[Exponents, float]:
        return {self.basis.exponents_of(int(r)): float(self.coeffs[r]) for r in np.flatnonzero(self.coeffs)}

    def _check(self, other: "TruncatedPoly"):
        if not isinstance(other, TruncatedPoly):
            raise TypeError(f"Expected TruncatedPoly, got {type(other).__name__}")
        if other.basis is not self.basis:
            raise ValueError(
                f"Shape mismatch: (m={self.num_vars}, n={self.max_degree}) vs "
                f"(m={other.num_vars}, n={other.max_degree})"
            )

    def __add__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        self._check(other)
        return TruncatedPoly(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "TruncatedPoly") -> "TruncatedPoly":
        self._check(other)
        return TruncatedPoly(self.basis, self.coeffs - other.coeffs)

    def __neg__(self) -> "TruncatedPoly":
        return TruncatedPoly(self.basis, -self.coeffs)

    def __mul__(self, other: Union["TruncatedPoly", float]) -> "TruncatedPoly":
        if isinstance(other, TruncatedPoly):
            self._check(other)
            return TruncatedPoly(self.basis, self.basis.multiply(self.coeffs, other.coeffs))
        return TruncatedPoly(self.basis, self.coeffs * float(other))

    def __rmul__(self, other: float) -> "TruncatedPoly":
        return self * other

    def __call__(self, x: Sequence[float]) -> float:
        return float(self.coeffs @ self.basis.monomial_values(x))

    def diff(self, var: int) -> "TruncatedPoly":
        if not 0 <= var < self.num_vars:
            raise IndexError(f"Variable index {var} outside [0, {self.num_vars})")
        return TruncatedPoly(self.basis, self.basis.differentiate(self.coeffs, var))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TruncatedPoly)
            and other.basis is self.basis
            and np.array_equal(self.coeffs, other.coeffs)
        )

    __hash__ = None

    def __repr__(self) -> str:
        shown = ", ".join(f"{e}: {c:.6g}" for e, c in list(self.terms().items())[:6])
        more = " ..." if np.count_nonzero(self.coeffs) > 6 else ""
        return f"TruncatedPoly(m={self.num_vars}, n={self.max_degree}, {{{shown}{more}}})"


def poly_add(p: TruncatedPoly, q: TruncatedPoly) -> TruncatedPoly:
    return p + q


def poly_scale(p: TruncatedPoly, c: float) -> TruncatedPoly:
    return p * float(c)


def poly_mul(p: TruncatedPoly, q: TruncatedPoly) -> TruncatedPoly:
    """Product with every term above degree n discarded."""
    return p * q


def poly_eval(p: TruncatedPoly, x: Sequence[float]) -> float:
    return p(x)


def poly_diff(p: TruncatedPoly, var: int) -> TruncatedPoly:
    return p.diff(var)


class PowerTable:
    """
    Memoized products prod_b H_b^e_b for one set of substituted components.

    Powers H_b^e and partial products are cached, so a sweep over many
    monomials costs about one truncated multiplication per new monomial.
    """

    def __init__(self, basis: MonomialBasis, components: np.ndarray):
        if components.shape != (basis.num_vars, basis.size):
            raise ValueError(
                f"Expected components of shape {(basis.num_vars, basis.size)}, got {components.shape}"
            )
        self.basis = basis
        self.components = components
        self._powers: Dict[Tuple[int, int], np.ndarray] = {}
        self._products: Dict[Exponents, np.ndarray] = {}
        one = np.zeros(basis.size)
        one[0] = 1.0
        self._one = one

    def power(self, var: int, exponent: int) -> np.ndarray:
        if exponent == 0:
            return self._one
        if exponent == 1:
            return self.components[var]
        key = (var, exponent)
        cached = self._powers.get(key)
        if cached is None:
            cached = self.basis.multiply(self.power(var, exponent - 1), self.components[var])
            self._powers[key] = cached
        return cached

    def product(self, exponents: Exponents) -> np.ndarray:
        cached = self._products.get(exponents)
        if cached is not None:
            return cached
        nonzero = [b for b, e in enumerate(exponents) if e]
        if not nonzero:
            result = self._one
        elif len(nonzero) == 1:
            b = nonzero[0]
            result = self.power(b, exponents[b])
        else:
            last = nonzero[-1]
            prefix = tuple(0 if b == last else e for b, e in enumerate(exponents))
            result = self.basis.multiply(self.product(prefix), self.power(last, exponents[last]))
        self._products[exponents] = result
        return result


def poly_power_products(H: Sequence[TruncatedPoly], r: Union[int, Sequence[int]]) -> TruncatedPoly:
    """
    Substitute the components H into the monomial G_r.

    Args:
        H: one TruncatedPoly per variable, all on the same basis
        r: flat monomial index or its exponent vector

    Returns:
        prod_b H_b^{e_b(r)} truncated at the basis degree
    """
    if not H:
        raise ValueError("poly_power_products needs at least one component")
    basis = H[0].basis
    for component in H:
        H[0]._check(component)
    if len(H) != basis.num_vars:
        raise ValueError(f"Expected {basis.num_vars} components, got {len(H)}")
    exps = basis.exponents_of(r) if isinstance(r, (int, np.integer)) else tuple(int(e) for e in r)
    table = PowerTable(basis, np.vstack([h.coeffs for h in H]))
    return TruncatedPoly(basis, table.product(exps))


def identity_components(num_vars: int, max_degree: int) -> np.ndarray:
    """Coefficient matrix of the identity map: row a is the monomial x_a."""
    basis = get_basis(num_vars, max_degree)
    out = np.zeros((num_vars, basis.size))
    for a in range(num_vars):
        out[a, 1 + a] = 1.0
    return out


@dataclass(frozen=True)
class PolyMap:
    """
    Truncated Taylor transfer map about a design orbit.

    Inputs and outputs are deviations: absolute output is final_point plus
    the component values at zeta = (absolute input - expansion_point).
    """
    components: Tuple[TruncatedPoly, ...]
    expansion_point: Tuple[float, ...]
    final_point: Tuple[float, ...]
    drive_period: float
    steps: int
    params: Optional["DuffingParams"] = None
    parameter_rows: Tuple[int, ...] = ()
    time_base: str = "normalized"
    built_at: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def __post_init__(self):
        if not self.components:
            raise ValueError("PolyMap needs at least one component")
        basis = self.components[0].basis
        if len(self.components) != basis.num_vars:
            raise ValueError(f"PolyMap over {basis.num_vars} variables needs {basis.num_vars} components")
        for component in self.components:
            if component.basis is not basis:
                raise ValueError("All PolyMap components must share (m, n)")
            if component.coeffs[0] != 0.0:
                raise ValueError("PolyMap components act on deviations and must have zero constant term")
        if len(self.expansion_point) != basis.num_vars or len(self.final_point) != basis.num_vars:
            raise ValueError("Expansion and final points need one coordinate per variable")

    @property
    def basis(self) -> MonomialBasis:
        return self.components[0].basis

    @property
    def num_vars(self) -> int:
        return self.basis.num_vars

    @property
    def max_degree(self) -> int:
        return self.basis.max_degree

    def coefficient_matrix(self) -> np.ndarray:
        return np.vstack([c.coeffs for c in self.components])

    def evaluate(self, zeta: Sequence[float]) -> np.ndarray:
        """All components at one deviation; monomials are computed once."""
        return self.coefficient_matrix() @ self.basis.monomial_values(zeta)

    def linear_part(self) -> np.ndarray:
        """Degree-one block: entry [a, b] is the coefficient of x_b in component a."""
        return self.coefficient_matrix()[:, 1:1 + self.num_vars].copy()
