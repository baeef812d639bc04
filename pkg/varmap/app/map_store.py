"""
Plain-text storage of Taylor transfer maps.

Layout:

    varmap-map v1
    m 3
    n 8
    q_bd 1.26082
    ...
    coefficients
    1 1 0 0 -0.43110278113442017
    ...

Header lines are "key value". Each body row is "a e1 .. em coefficient"
with a 1-based component index and explicit exponents; rows whose
coefficient is exactly zero are left out.
"""
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from app.duffing import DuffingParams, TIME_BASES
from app.poly import PolyMap, TruncatedPoly, get_basis

logger = logging.getLogger(__name__)

FORMAT_VERSION = "varmap-map v1"
BODY_MARKER = "coefficients"

_FLOAT_KEYS = ("q_bd", "p_bd", "omega_bd", "beta", "epsilon", "omega_d", "T", "q_final", "p_final")
_KNOWN_KEYS = set(_FLOAT_KEYS) | {"m", "n", "steps", "built", "time_base", "parameter_rows"}


class MapFileError(ValueError):
    """A map file that cannot be read back."""


def _format_coefficient(value: float) -> str:
    return "%.17g" % value


def render_map(poly_map: PolyMap) -> str:
    """Text of a map file, header first."""
    m, n = poly_map.num_vars, poly_map.max_degree
    if m not in (2, 3):
        raise ValueError(f"Map files hold maps in (q, p) or (q, p, omega), got {m} variables")

    header: List[Tuple[str, str]] = [
        ("m", str(m)),
        ("n", str(n)),
        ("q_bd", repr(float(poly_map.expansion_point[0]))),
        ("p_bd", repr(float(poly_map.expansion_point[1]))),
    ]
    if m == 3:
        header.append(("omega_bd", repr(float(poly_map.expansion_point[2]))))
    if poly_map.params is not None:
        header += [
            ("beta", repr(float(poly_map.params.beta))),
            ("epsilon", repr(float(poly_map.params.epsilon))),
            ("omega_d", repr(float(poly_map.params.omega_d))),
        ]
    header += [
        ("T", repr(float(poly_map.drive_period))),
        ("steps", str(int(poly_map.steps))),
        ("built", poly_map.built_at),
        ("time_base", poly_map.time_base),
        ("q_final", repr(float(poly_map.final_point[0]))),
        ("p_final", repr(float(poly_map.final_point[1]))),
        ("parameter_rows", " ".join(str(r + 1) for r in poly_map.parameter_rows) or "none"),
    ]

    lines = [FORMAT_VERSION]
    lines += [f"{key} {value}" for key, value in header]
    lines.append(BODY_MARKER)
    exponents = poly_map.basis.exponents
    for a, component in enumerate(poly_map.components):
        for r in np.flatnonzero(component.coeffs):
            exps = " ".join(str(int(e)) for e in exponents[r])
            lines.append(f"{a + 1} {exps} {_format_coefficient(float(component.coeffs[r]))}")
    return "\n".join(lines) + "\n"


def save_map(poly_map: PolyMap, path: Union[str, Path]) -> Path:
    """Write a map file; returns the path written."""
    target = Path(path)
    text = render_map(poly_map)
    try:
        target.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ValueError(f"Cannot write map file {target}: {e}") from e
    logger.info("Saved order-%d map to %s", poly_map.max_degree, target)
    return target


def _parse_header(lines: List[str], source: str) -> Tuple[Dict[str, str], int]:
    header: Dict[str, str] = {}
    for i, line in enumerate(lines):
        if line == BODY_MARKER:
            return header, i + 1
        key, _, value = line.partition(" ")
        if key not in _KNOWN_KEYS:
            raise MapFileError(f"{source}: unknown header key '{key}'")
        if key in header:
            raise MapFileError(f"{source}: duplicate header key '{key}'")
        header[key] = value.strip()
    raise MapFileError(f"{source}: missing '{BODY_MARKER}' line")


def parse_map(text: str, source: str = "<map>") -> PolyMap:
    """Rebuild a PolyMap from map-file text."""
    lines = [line.strip() for line in text.splitlines()]
    lines = [line for line in lines if line and not line.startswith("#")]
    if not lines or lines[0] != FORMAT_VERSION:
        raise MapFileError(f"{source}: first line must be '{FORMAT_VERSION}'")

    header, body_start = _parse_header(lines[1:], source)
    body_start += 1
    try:
        m, n = int(header["m"]), int(header["n"])
        values = {key: float(header[key]) for key in _FLOAT_KEYS if key in header}
        steps = int(header["steps"])
        drive_period = values["T"]
        expansion = [values["q_bd"], values["p_bd"]]
        final = [values.get("q_final", values["q_bd"]), values.get("p_final", values["p_bd"])]
    except KeyError as e:
        raise MapFileError(f"{source}: missing header key {e}") from e
    except ValueError as e:
        raise MapFileError(f"{source}: bad header value: {e}") from e

    if m not in (2, 3) or n < 1:
        raise MapFileError(f"{source}: unsupported shape m={m}, n={n}")
    if m == 3:
        if "omega_bd" not in values:
            raise MapFileError(f"{source}: missing header key 'omega_bd'")
        expansion.append(values["omega_bd"])
        final.append(values["omega_bd"])

    time_base = header.get("time_base", "fixed")
    if time_base not in TIME_BASES:
        raise MapFileError(f"{source}: unknown time_base '{time_base}'")

    rows_text = header.get("parameter_rows", "none")
    parameter_rows = () if rows_text == "none" else tuple(int(r) - 1 for r in rows_text.split())

    params: Optional[DuffingParams] = None
    if all(key in values for key in ("beta", "epsilon", "omega_d")):
        params = DuffingParams(beta=values["beta"], epsilon=values["epsilon"], omega_d=values["omega_d"])

    basis = get_basis(m, n)
    coeffs = np.zeros((m, basis.size))
    seen = set()
    for line in lines[body_start:]:
        fields = line.split()
        if len(fields) != m + 2:
            raise MapFileError(f"{source}: bad coefficient row '{line}'")
        try:
            a = int(fields[0]) - 1
            exps = tuple(int(e) for e in fields[1:1 + m])
            value = float(fields[-1])
        except ValueError as e:
            raise MapFileError(f"{source}: bad coefficient row '{line}'") from e
        if not 0 <= a < m:
            raise MapFileError(f"{source}: component {a + 1} out of range 1..{m}")
        try:
            r = basis.index_of(exps)
        except (IndexError, ValueError) as e:
            raise MapFileError(f"{source}: bad exponents {exps}: {e}") from e
        if (a, r) in seen:
            raise MapFileError(f"{source}: duplicate row for component {a + 1}, exponents {exps}")
        seen.add((a, r))
        coeffs[a, r] = value

    try:
        return PolyMap(
            components=tuple(TruncatedPoly(basis, coeffs[a]) for a in range(m)),
            expansion_point=tuple(expansion),
            final_point=tuple(final),
            drive_period=drive_period,
            steps=steps,
            params=params,
            parameter_rows=parameter_rows,
            time_base=time_base,
            built_at=header.get("built", ""),
        )
    except ValueError as e:
        raise MapFileError(f"{source}: {e}") from e


def load_map(path: Union[str, Path]) -> PolyMap:
    """Read a map file written by save_map."""
    source = Path(path)
    try:
        text = source.read_text(encoding="utf-8")
    except OSError as e:
        raise MapFileError(f"Cannot read map file {source}: {e}") from e
    poly_map = parse_map(text, str(source))
    logger.debug("Loaded order-%d map from %s", poly_map.max_degree, source)
    return poly_map
