"""Map parameters, constraint checking and the key=value config format."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConstraintViolation

EX1 = "Ex1"
EX2 = "Ex2"

CONFIG_KEYS = (
    "example",
    "l",
    "lambda_ss",
    "lambda_c",
    "alpha",
    "lambda_c_plus",
    "delta_bump",
    "mu",
    "n_power",
)

_DEFAULTS = {
    EX1: dict(l=3, lambda_ss=0.1, lambda_c=0.4, alpha=0.5, lambda_c_plus=1.05,
              delta_bump=0.03, mu=0.0, n_power=1),
    EX2: dict(l=2, lambda_ss=0.45, lambda_c=0.505, alpha=0.0, lambda_c_plus=1.05,
              delta_bump=0.04, mu=0.0, n_power=1),
}


@dataclass(frozen=True)
class Constraint:
    name: str
    lhs: float
    rhs: float
    holds: bool
    required: bool = True


@dataclass(frozen=True)
class MapParams:
    """Validated parameters of F0 and of the deformed family F_{mu,n}.

    Build instances with :func:`validate_params`; the constructor itself
    does no checking.
    """

    example: str
    l: int
    lambda_ss: float
    lambda_c: float
    alpha: float = 0.0
    c: tuple = ()
    d: tuple = ()
    lambda_c_plus: float = 1.05
    delta_bump: float = 0.03
    mu: float = 0.0
    n_power: int = 1
    constraints: tuple = field(default=(), compare=False, repr=False)

    @property
    def rho(self) -> float:
        return self.lambda_c / self.l

    @property
    def lambda_uu(self) -> int:
        return self.l

    @property
    def slopes(self) -> tuple:
        """Per-cell slopes alpha_i of g on R_i (Ex1 only)."""
        return (self.alpha, 0.0, -self.alpha)

    @property
    def g_sup(self) -> float:
        """sup |g| over the circle."""
        if self.example == EX1:
            return self.alpha
        return 1.0

    @property
    def dg_sup(self) -> float:
        """sup |g'|, the largest cell slope."""
        if self.example == EX1:
            return abs(self.alpha)
        return 2.0 * math.pi

    @property
    def y_bound(self) -> float:
        """Half-height of the forward-invariant y-interval.

        Ex1 lives in [-1, 1]. For Ex2 the sine forcing has amplitude 1, so
        the invariant interval is [-1/(1-lambda_c), 1/(1-lambda_c)].
        """
        if self.example == EX1:
            return 1.0
        return 1.0 / (1.0 - self.lambda_c)

    @property
    def h_values(self) -> tuple:
        if self.example == EX1:
            return tuple(self.d)
        return (0.5, -0.5)

    def replace(self, **changes) -> "MapParams":
        raw = self.to_dict()
        raw.update(changes)
        return validate_params(raw)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in CONFIG_KEYS}
        out["d"] = list(self.d)
        return out

    def constraint_report(self) -> list:
        return [dataclasses.asdict(c) for c in self.constraints]

    def flag(self, name: str) -> bool:
        for c in self.constraints:
            if c.name == name:
                return c.holds
        raise KeyError(name)


def _example_name(value) -> str:
    s = str(value).strip().lower()
    if s in ("1", "ex1", "example1"):
        return EX1
    if s in ("2", "ex2", "example2"):
        return EX2
    raise ValueError(f"unknown example {value!r}")


def validate_params(raw) -> MapParams:
    """Check every inequality on the parameters and build a MapParams.

    ``raw`` is a mapping; missing keys fall back to the per-example
    defaults. All failed required inequalities are collected and raised
    together as a single :class:`ConstraintViolation`. Informational
    flags (H2 and the deformation-family rate conditions) are recorded
    in ``constraints`` but never raise.
    """
    raw = dict(raw)
    example = _example_name(raw.pop("example", EX1))
    vals = dict(_DEFAULTS[example])
    vals.update({k: v for k, v in raw.items() if v is not None})

    l = int(vals["l"])
    lss = float(vals["lambda_ss"])
    lc = float(vals["lambda_c"])
    alpha = float(vals["alpha"])
    lcp = float(vals["lambda_c_plus"])
    delta = float(vals["delta_bump"])
    mu = float(vals["mu"])
    n = int(vals["n_power"])

    checks = []

    def need(name, lhs, rhs, holds):
        checks.append(Constraint(name, float(lhs), float(rhs), bool(holds), True))

    def flag(name, lhs, rhs, holds):
        checks.append(Constraint(name, float(lhs), float(rhs), bool(holds), False))

    need("l >= 2", l, 2, l >= 2)
    need("lambda_ss > 0", lss, 0, lss > 0)
    need("lambda_ss < lambda_c", lss, lc, lss < lc)
    need("lambda_c < 1", lc, 1, lc < 1)
    need("lambda_c > 1/l", lc, 1.0 / l, lc > 1.0 / l)

    if example == EX1:
        need("l == 3", l, 3, l == 3)
        need("alpha > 0", alpha, 0, alpha > 0)
        need("alpha < 1 - lambda_c", alpha, 1 - lc, alpha < 1 - lc)
        slopes = (alpha, 0.0, -alpha)
        c = tuple(-a for a in slopes)
        if "c" in vals:
            given = tuple(float(v) for v in vals["c"])
            need("c_i = -alpha_i", max(abs(a - b) for a, b in zip(given, c)), 0,
                 len(given) == 3 and all(abs(a - b) < 1e-15 for a, b in zip(given, c)))
        d = tuple(float(v) for v in vals.get("d", (-2.0 / 3.0, 0.0, 2.0 / 3.0)))
        need("len(d) == 3", len(d), 3, len(d) == 3)
        ds = sorted(d)
        need("lambda_ss + max|d_i| <= 1", lss + max(abs(v) for v in d), 1,
             lss + max(abs(v) for v in d) <= 1)
        gap = min(b - a for a, b in zip(ds, ds[1:])) if len(ds) > 1 else math.inf
        need("z-slabs disjoint: min gap(d) > 2 lambda_ss", gap, 2 * lss, gap > 2 * lss)
    else:
        need("l == 2", l, 2, l == 2)
        need("lambda_ss < 0.5", lss, 0.5, lss < 0.5)
        need("lambda_c > 0.5", lc, 0.5, lc > 0.5)
        need("lambda_c < 0.51", lc, 0.51, lc < 0.51)
        c, d = (), ()
        alpha = 0.0

    need("delta_bump > 0", delta, 0, delta > 0)
    need("delta_bump < 1/(10 l)", delta, 1.0 / (10 * l), delta < 1.0 / (10 * l))
    need("0 <= mu <= 1", mu, 1, 0.0 <= mu <= 1.0)
    need("n_power >= 1", n, 1, n >= 1)
    need("lambda_c_plus > 1", lcp, 1, lcp > 1)

    # Rates of F_{mu,n}: centre contraction lambda_c^n, centre expansion at
    # the deformed periodic point, unstable expansion l^n.
    lc_minus = lc ** n
    lc_plus_family = max(lc ** n, lc ** n + mu * (lcp - lc ** n))
    luu_minus = float(l) ** n
    h2_lhs = lc_plus_family / (lc_minus ** 2 * luu_minus)
    flag("H2: lambda_c- < 1 < lambda_c+", lc_plus_family, 1, lc_minus < 1 < lc_plus_family)
    flag("H2: lambda_c+/((lambda_c-)^2 lambda_uu-) < 1", h2_lhs, 1, h2_lhs < 1)
    tc1 = lcp ** 2 / (3 * lc)
    flag("(lambda_c+)^2/(3 lambda_c) < 1", tc1, 1, tc1 < 1)
    tc2 = 3 * lss / lcp
    flag("3 lambda_ss/lambda_c+ < 1", tc2, 1, tc2 < 1)
    tc3 = lcp ** 2 / (3 * lc) ** n
    flag("(lambda_c+)^2/(3 lambda_c)^n < 1", tc3, 1, tc3 < 1)

    failures = [(k.name, k.lhs, k.rhs) for k in checks if k.required and not k.holds]
    if failures:
        raise ConstraintViolation(failures)

    return MapParams(
        example=example, l=l, lambda_ss=lss, lambda_c=lc, alpha=alpha, c=c, d=d,
        lambda_c_plus=lcp, delta_bump=delta, mu=mu, n_power=n,
        constraints=tuple(checks),
    )


def default_params(example=EX1, **overrides) -> MapParams:
    raw = {"example": example}
    raw.update(overrides)
    return validate_params(raw)


def parse_config_text(text: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        if key == "example":
            raw[key] = value
        elif key in ("l", "n_power"):
            raw[key] = int(value)
        else:
            raw[key] = float(value)
    return raw


def load_config(path) -> dict:
    return parse_config_text(Path(path).read_text())


def format_config(params: MapParams) -> str:
    lines = [f"example={params.example}"]
    for key in CONFIG_KEYS[1:]:
        lines.append(f"{key}={getattr(params, key)!r}")
    return "\n".join(lines) + "\n"
