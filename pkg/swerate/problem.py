"""Problem instances: coefficients, initial data, horizon and observation point."""

from __future__ import annotations

import configparser
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np

from .exceptions import ProblemConfigError, SweRateError
from .expression import Expression, parse_expression

logger = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-12
DEFAULT_SIGMA_FLOOR = 1e-6
PROBLEM_KEYS = ("preset", "b", "sigma", "u0", "v0", "T", "x0")

SIN_PI_X = "sin(3.141592653589793*x)"


@dataclass(frozen=True)
class ProblemSpec:
    b: Expression
    sigma: Expression
    u0: Expression
    v0: Expression
    T: float = 1.0
    x0: float = 0.5
    lipschitz_hint: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        if not np.isfinite(self.T) or self.T <= 0:
            raise ProblemConfigError(f"T must be positive, got {self.T}")
        if not 0.0 < self.x0 < 1.0:
            raise ProblemConfigError(f"x0 must lie strictly inside (0, 1), got {self.x0}")
        if self.lipschitz_hint <= 0:
            raise ProblemConfigError("lipschitz_hint must be positive")
        try:
            ends = (float(self.u0(0.0)), float(self.u0(1.0)))
        except SweRateError as exc:
            raise ProblemConfigError(f"u0 cannot be evaluated at the boundary: {exc}") from exc
        if max(abs(ends[0]), abs(ends[1])) > BOUNDARY_TOL:
            raise ProblemConfigError(
                f"u0 must vanish at 0 and 1 (u0(0)={ends[0]:g}, u0(1)={ends[1]:g})"
            )

    def is_linear_class(self) -> bool:
        """b identically zero and sigma a nonzero constant."""
        if not (self.b.is_constant() and self.sigma.is_constant()):
            return False
        return self.b(0.0) == 0.0 and self.sigma(0.0) != 0.0


def make_problem(
    b: str,
    sigma: str,
    u0: str,
    v0: str,
    T: float = 1.0,
    x0: float = 0.5,
    name: str = "custom",
    lipschitz_hint: float = 1.0,
) -> ProblemSpec:
    return ProblemSpec(
        b=parse_expression(b),
        sigma=parse_expression(sigma),
        u0=parse_expression(u0),
        v0=parse_expression(v0),
        T=float(T),
        x0=float(x0),
        lipschitz_hint=float(lipschitz_hint),
        name=name,
    )


PRESET_SOURCES: Dict[str, Dict[str, str]] = {
    "LINEAR": {"b": "0", "sigma": "1", "lipschitz_hint": "1"},
    "NONLIN-A": {"b": "sin(x)", "sigma": "2 + sin(x)", "lipschitz_hint": "1"},
    "NONLIN-B": {"b": "tanh(x)", "sigma": "1 + 0.5*cos(x)", "lipschitz_hint": "1"},
}


def preset(name: str) -> ProblemSpec:
    key = name.strip().upper()
    if key not in PRESET_SOURCES:
        raise ProblemConfigError(
            f"unknown preset {name!r}; choose one of {', '.join(PRESET_SOURCES)}"
        )
    src = PRESET_SOURCES[key]
    return make_problem(
        b=src["b"],
        sigma=src["sigma"],
        u0=SIN_PI_X,
        v0="0",
        T=1.0,
        x0=0.5,
        name=key,
        lipschitz_hint=float(src["lipschitz_hint"]),
    )


def problem_from_mapping(values: Mapping[str, str], name: Optional[str] = None) -> ProblemSpec:
    unknown = sorted(set(values) - set(PROBLEM_KEYS))
    if unknown:
        raise ProblemConfigError(f"unknown problem keys: {', '.join(unknown)}")
    base = preset(values["preset"]) if values.get("preset") else preset("LINEAR")
    changes: Dict[str, object] = {}
    for key in ("b", "sigma", "u0", "v0"):
        if values.get(key):
            changes[key] = parse_expression(values[key])
    try:
        if values.get("T"):
            changes["T"] = float(values["T"])
        if values.get("x0"):
            changes["x0"] = float(values["x0"])
    except ValueError as exc:
        raise ProblemConfigError(f"bad numeric value in problem file: {exc}") from exc
    label = name or values.get("preset") or "custom"
    return replace(base, name=label, **changes)


def load_problem(path) -> ProblemSpec:
    """Read a flat ``key = value`` problem file (``#`` starts a comment)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ProblemConfigError(f"cannot read problem file {path}: {exc}") from exc
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keep 'T' upper case
    try:
        parser.read_string("[problem]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ProblemConfigError(f"malformed problem file {path}: {exc}") from exc
    values = dict(parser["problem"])
    logger.info("Loaded problem file %s (%s)", path, ", ".join(sorted(values)))
    return problem_from_mapping(values, name=path.stem)


@dataclass
class ValidationReport:
    boundary_ok: bool
    u0_at_0: float
    u0_at_1: float
    min_abs_sigma: float
    sigma_floor: float
    lipschitz_b: float
    lipschitz_sigma: float
    sample_range: float
    samples: int
    failures: List[str] = field(default_factory=list)

    @property
    def sigma_floor_ok(self) -> bool:
        return self.min_abs_sigma >= self.sigma_floor

    @property
    def passed(self) -> bool:
        return not self.failures


def _lipschitz_estimate(expr: Expression, xs: np.ndarray) -> float:
    values = np.asarray(expr(xs), dtype=float) * np.ones_like(xs)
    quotients = np.abs(np.diff(values)) / np.diff(xs)
    return float(np.max(quotients))


def validate_problem(
    spec: ProblemSpec,
    sample_range: float = 5.0,
    samples: int = 1001,
    sigma_floor: float = DEFAULT_SIGMA_FLOOR,
) -> ValidationReport:
    if sample_range <= 0 or samples < 2:
        raise ProblemConfigError("validation needs range > 0 and at least 2 samples")
    failures: List[str] = []
    try:
        u0_left = float(spec.u0(0.0))
        u0_right = float(spec.u0(1.0))
    except SweRateError as exc:
        u0_left = u0_right = float("nan")
        failures.append(f"u0 not evaluable at the boundary: {exc}")
    boundary_ok = abs(u0_left) <= BOUNDARY_TOL and abs(u0_right) <= BOUNDARY_TOL
    if not boundary_ok and not failures:
        failures.append(f"u0 does not vanish at 0 and 1 (u0(0)={u0_left:g}, u0(1)={u0_right:g})")

    xs = np.linspace(-sample_range, sample_range, samples)
    min_sigma = float("nan")
    lip_b = lip_sigma = float("nan")
    try:
        sig = np.asarray(spec.sigma(xs), dtype=float) * np.ones_like(xs)
        min_sigma = float(np.min(np.abs(sig)))
        lip_sigma = _lipschitz_estimate(spec.sigma, xs)
        lip_b = _lipschitz_estimate(spec.b, xs)
    except SweRateError as exc:
        failures.append(f"coefficients not evaluable on [-{sample_range:g}, {sample_range:g}]: {exc}")
    if not np.isnan(min_sigma) and min_sigma < sigma_floor:
        failures.append(
            f"sigma comes within {min_sigma:g} of zero on the sampled range (floor {sigma_floor:g})"
        )

    report = ValidationReport(
        boundary_ok=boundary_ok,
        u0_at_0=u0_left,
        u0_at_1=u0_right,
        min_abs_sigma=min_sigma,
        sigma_floor=sigma_floor,
        lipschitz_b=lip_b,
        lipschitz_sigma=lip_sigma,
        sample_range=sample_range,
        samples=samples,
        failures=failures,
    )
    for failure in failures:
        logger.warning("validate_problem(%s): %s", spec.name, failure)
    return report
