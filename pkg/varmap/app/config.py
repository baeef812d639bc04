"""
Configuration settings for varmap runs.

Values come from (highest priority first) command-line flags, a key=value
run-config file, VARMAP_* environment variables and the defaults below,
which are the settings of the period-doubling study.
"""
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from dotenv import dotenv_values
from pydantic import field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


def _split_floats(text: str) -> List[float]:
    return [float(part) for part in text.replace(";", ",").split(",") if part.strip()]


class Settings(BaseSettings):
    """Run settings; unknown environment and .env keys are ignored."""

    # Find .env file in project root (parent of varmap directory)
    _project_root = Path(__file__).parent.parent.parent
    _env_file = _project_root / ".env"

    model_config = SettingsConfigDict(
        env_prefix="VARMAP_",
        env_file=str(_env_file) if _env_file.exists() else None,
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Equation of motion
    beta: float = 0.1
    epsilon: float = 25.0
    omega_d: float = 1.285

    # Map build
    q_bd: float = 1.26082
    p_bd: float = 2.05452
    order: int = 8
    steps: int = 2048
    time_base: Literal["normalized", "fixed"] = "normalized"

    # Exact map
    exact: bool = False
    exact_steps: int = 2000
    fd_step: float = 1e-6

    # Steady-state protocol
    omega_min: Optional[float] = None
    omega_max: Optional[float] = None
    samples: int = 200
    direction: Literal["up", "down"] = "up"
    seed_mode: Literal["continuation", "fixed_seed"] = "continuation"
    seed_q: float = 1.26082
    seed_p: float = 2.05452
    transient: int = 2000
    keep: int = 256
    max_period: int = 64
    period_tol: float = 1e-6
    escape_radius: float = 1e3
    taylor_omega_bound: float = 0.05

    # Attractor clouds
    omega: Optional[float] = None
    attractor_transient: int = 10000
    attractor_keep: int = 200000
    window: Optional[str] = None  # "q_lo,q_hi,p_lo,p_hi"

    # Fixed points
    period: int = 1
    guess_q: Optional[float] = None
    guess_p: Optional[float] = None
    omega_start: Optional[float] = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 50

    # Comparison
    radii: str = "1e-3,3e-3,1e-2,3e-2"
    directions: int = 16

    # I/O and execution
    map_file: Optional[str] = None
    map_files: Optional[str] = None
    out: str = "-"
    threads: int = 1
    quiet: bool = False

    @field_validator("quiet", "exact", mode="before")
    @classmethod
    def parse_flag(cls, v):
        """Convert string to boolean."""
        if isinstance(v, bool):
            return v
        if isinstance(v, str):
            return v.strip().lower() in ("1", "true", "yes", "on")
        return bool(v)

    @field_validator("radii")
    @classmethod
    def parse_radii(cls, v: str) -> str:
        values = _split_floats(v)
        if not values or any(r < 0 for r in values):
            raise ValueError("radii must be a comma-separated list of non-negative numbers")
        return v

    @field_validator("window")
    @classmethod
    def parse_window(cls, v: Optional[str]) -> Optional[str]:
        if v is None or not v.strip():
            return None
        values = _split_floats(v)
        if len(values) != 4 or not (values[0] < values[1] and values[2] < values[3]):
            raise ValueError("window must be q_lo,q_hi,p_lo,p_hi with lo < hi")
        return v

    @field_validator("steps", "exact_steps", "samples", "max_period", "directions", "threads", "period",
                     "newton_max_iter")
    @classmethod
    def positive_int(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("transient", "keep", "attractor_transient", "attractor_keep")
    @classmethod
    def non_negative_int(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("order")
    @classmethod
    def map_order(cls, v: int) -> int:
        if v < 1:
            raise ValueError("a map needs degree >= 1")
        return v

    @model_validator(mode="after")
    def positive_scales(self):
        for name in ("omega_d", "fd_step", "period_tol", "escape_radius", "newton_tol", "taylor_omega_bound"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        return self

    @property
    def radius_list(self) -> List[float]:
        """Probe radii for map comparison."""
        return _split_floats(self.radii)

    @property
    def window_box(self) -> Optional[Tuple[float, float, float, float]]:
        """Zoom window as (q_lo, q_hi, p_lo, p_hi)."""
        if self.window is None:
            return None
        q_lo, q_hi, p_lo, p_hi = _split_floats(self.window)
        return q_lo, q_hi, p_lo, p_hi

    @property
    def map_file_list(self) -> List[str]:
        if not self.map_files:
            return []
        return [part.strip() for part in self.map_files.split(",") if part.strip()]


def read_run_config(path: str) -> Dict[str, Any]:
    """
    Parse a key=value run-config file.

    Keys may use dashes or underscores; blank lines and # comments are skipped.
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ValueError(f"Config file not found: {path}")
    values = {}
    for key, value in dotenv_values(config_path).items():
        if value is None:
            raise ValueError(f"Config key '{key}' in {path} has no value")
        name = key.strip().lower().replace("-", "_")
        if name not in Settings.model_fields:
            raise ValueError(f"Unknown config key '{key}' in {path}")
        values[name] = value
    return values


def load_settings(config_path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> Settings:
    """Merge config file values with command-line overrides (flags win)."""
    values: Dict[str, Any] = {}
    if config_path:
        values.update(read_run_config(config_path))
    if overrides:
        unknown = sorted(set(overrides) - set(Settings.model_fields))
        if unknown:
            raise ValueError(f"Unknown settings: {', '.join(unknown)}")
        values.update({k: v for k, v in overrides.items() if v is not None})
    return Settings(**values)


settings = Settings()
