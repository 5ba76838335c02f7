"""Coefficients f, g and driving pairs (M, V) with their characteristic bound m."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import rng
from .errors import InvalidArgument

LANES_PER_TERM = 64


@dataclass(frozen=True)
class Coefficient:
    """A scalar coefficient function with linear-growth (mu) and Lipschitz (c) constants."""

    func: Callable[[float, np.ndarray], np.ndarray]
    mu: float
    c: float
    name: str
    params: tuple = ()

    def __call__(self, t, x):
        return self.func(t, x)

    def to_dict(self):
        return {"name": self.name, **dict(self.params)}


def _zero():
    return Coefficient(lambda t, x: np.zeros_like(x), 0.0, 0.0, "zero")


def _const(value: float):
    v = float(value)
    return Coefficient(lambda t, x: np.full_like(x, v), abs(v), 0.0, "const", (("value", v),))


def _linear(a: float):
    a = float(a)
    return Coefficient(lambda t, x: a * x, abs(a), abs(a), "linear", (("a", a),))


def _affine(a: float, b: float):
    a, b = float(a), float(b)
    return Coefficient(lambda t, x: a * x + b, max(abs(a), abs(b)), abs(a), "affine", (("a", a), ("b", b)))


def _mean_revert(theta: float, level: float):
    """theta * (level - x)."""
    th, lv = float(theta), float(level)
    return Coefficient(
        lambda t, x: th * (lv - x), abs(th) * max(1.0, abs(lv)), abs(th), "mean_revert",
        (("theta", th), ("level", lv)),
    )


def _sine(a: float, omega: float = 1.0):
    """a * sin(x + omega t): bounded and Lipschitz."""
    a, w = float(a), float(omega)
    return Coefficient(
        lambda t, x: a * np.sin(x + w * t), abs(a), abs(a), "sine", (("a", a), ("omega", w)),
    )


COEFFICIENTS: dict[str, Callable[..., Coefficient]] = {
    "zero": _zero,
    "const": _const,
    "linear": _linear,
    "affine": _affine,
    "mean_revert": _mean_revert,
    "sine": _sine,
}


def make_coefficient(spec: Mapping | str | float | int) -> Coefficient:
    if isinstance(spec, (int, float)):
        return _zero() if spec == 0 else _const(spec)
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in COEFFICIENTS:
        raise InvalidArgument(f"unknown coefficient {name!r}; known: {sorted(COEFFICIENTS)}")
    try:
        return COEFFICIENTS[name](**spec)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for coefficient {name!r}: {exc}") from None


@dataclass(frozen=True)
class JumpLaw:
    """Jump size distribution; every law here is bounded by ``bound``."""

    kind: str = "constant"
    value: float = 1.0
    low: float = 0.0
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform"):
            raise InvalidArgument(f"unknown jump law {self.kind!r}")
        if self.kind == "uniform" and not self.low < self.high:
            raise InvalidArgument("uniform jump law needs low < high")

    def sample(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full_like(u, self.value)
        return self.low + (self.high - self.low) * u

    @property
    def mean(self) -> float:
        return self.value if self.kind == "constant" else 0.5 * (self.low + self.high)

    @property
    def second_moment(self) -> float:
        if self.kind == "constant":
            return self.value**2
        a, b = self.low, self.high
        return (a * a + a * b + b * b) / 3.0

    @property
    def abs_mean(self) -> float:
        if self.kind == "constant":
            return abs(self.value)
        a, b = self.low, self.high
        if a >= 0 or b <= 0:
            return abs(0.5 * (a + b))
        return (a * a + b * b) / (2 * (b - a))

    @property
    def bound(self) -> float:
        return abs(self.value) if self.kind == "constant" else max(abs(self.low), abs(self.high))

    def to_dict(self):
        if self.kind == "constant":
            return {"kind": "constant", "value": self.value}
        return {"kind": "uniform", "low": self.low, "high": self.high}


@dataclass(frozen=True)
class Driver:
    """Driving pair with M = sigma*W + (compound Poisson - compensator) and V_t = v_rate * t.

    The raw process Z = M + V has independent increments; its mean lives in V and the
    centred remainder in M, so <M>_t = (sigma^2 + rate*E J^2) t and |V|_t = |v_rate| t.
    """

    kind: str
    sigma: float = 0.0
    rate: float = 0.0
    jump: JumpLaw | None = None
    v_rate: float = 1.0
    max_jumps: int = 32

    @property
    def qv_rate(self) -> float:
        jm2 = self.jump.second_moment if (self.jump is not None and self.rate > 0) else 0.0
        return self.sigma**2 + self.rate * jm2

    @property
    def compensator_rate(self) -> float:
        return self.rate * self.jump.mean if (self.jump is not None and self.rate > 0) else 0.0

    @property
    def has_martingale(self) -> bool:
        return self.qv_rate > 0

    def m(self, t) -> np.ndarray:
        """Dominating function for max(<M>_t, |V|_t)."""
        return max(self.qv_rate, abs(self.v_rate)) * np.asarray(t, dtype=float)

    def bracket(self, t) -> np.ndarray:
        return self.qv_rate * np.asarray(t, dtype=float)

    def fine_martingale(self, seed: int, particles: np.ndarray, step: int, dt: float, lane0: int = 0) -> np.ndarray:
        """Uncompensated martingale contribution (sigma dW + jumps) of one fine step."""
        out = np.zeros(particles.shape, dtype=float)
        if self.sigma != 0.0:
            out += self.sigma * math.sqrt(dt) * rng.normal(seed, particles, step, lane0)
        if self.rate > 0 and self.jump is not None:
            counts = rng.poisson(seed, particles, step, self.rate * dt, lane0 + 2, self.max_jumps)
            top = int(counts.max()) if counts.size else 0
            for j in range(top):
                sizes = self.jump.sample(rng.uniform(seed, particles, step, lane0 + 3 + j))
                out += np.where(counts > j, sizes, 0.0)
        return out

    def brownian(self, seed: int, particles: np.ndarray, step: int, dt: float, lane0: int = 0) -> np.ndarray:
        """The dW of one fine step (same draws as used inside the martingale part)."""
        return math.sqrt(dt) * rng.normal(seed, particles, step, lane0)

    def increments(self, seed: int, particles: np.ndarray, step: int, ratio: int,
                   t0: float, t1: float, fine_dt: float, lane0: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """(dM, dV) over the coarse step number ``step`` made of ``ratio`` fine steps.

        Fine steps are numbered from 1; coarse step j covers fine steps j*ratio+1 .. (j+1)*ratio.
        """
        dt = t1 - t0
        if self.has_martingale:
            dM = np.zeros(particles.shape, dtype=float)
            for s in range(step * ratio + 1, (step + 1) * ratio + 1):
                dM += self.fine_martingale(seed, particles, s, fine_dt, lane0)
            dM -= self.compensator_rate * dt
        else:
            dM = np.zeros(particles.shape, dtype=float)
        return dM, self.v_rate * dt

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "brownian":
            d["sigma"] = self.sigma
        elif self.kind == "compensated_poisson":
            d.update(rate=self.rate, jump=self.jump.to_dict())
        elif self.kind == "pii":
            d.update(sigma=self.sigma, rate=self.rate, drift=self.v_rate - self.compensator_rate,
                     jump=None if self.jump is None else self.jump.to_dict())
        return d


def brownian(sigma: float = 1.0) -> Driver:
    """M = sigma W, V_t = t."""
    return Driver("brownian", sigma=float(sigma), v_rate=1.0)


def deterministic_clock() -> Driver:
    """M = 0, V_t = t."""
    return Driver("deterministic_clock", v_rate=1.0)


def compensated_poisson(rate: float, jump: JumpLaw) -> Driver:
    """Compound Poisson Z split as M = Z - rate*E[J]*t and V_t = rate*E[J]*t."""
    if not rate > 0:
        raise InvalidArgument("Poisson rate must be positive")
    return Driver("compensated_poisson", rate=float(rate), jump=jump, v_rate=float(rate) * jump.mean)


def pii(drift: float = 0.0, sigma: float = 0.0, rate: float = 0.0, jump: JumpLaw | None = None) -> Driver:
    """Z_t = drift*t + sigma*W_t + compound Poisson, split into B = EZ (in V) and M = Z - EZ."""
    comp = float(rate) * jump.mean if (jump is not None and rate > 0) else 0.0
    return Driver("pii", sigma=float(sigma), rate=float(rate), jump=jump, v_rate=float(drift) + comp)


def make_driver(spec: Mapping | str) -> Driver:
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind", None)
    jump = spec.pop("jump", None)
    if jump is not None:
        try:
            jump = JumpLaw(**jump)
        except TypeError as exc:
            raise InvalidArgument(f"bad jump law: {exc}") from None
    try:
        if kind == "brownian":
            return brownian(**spec)
        if kind == "deterministic_clock":
            return deterministic_clock(**spec)
        if kind == "compensated_poisson":
            if jump is None:
                raise InvalidArgument("compensated_poisson needs a jump law")
            return compensated_poisson(jump=jump, **spec)
        if kind == "pii":
            return pii(jump=jump, **spec)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for driver {kind!r}: {exc}") from None
    raise InvalidArgument(f"unknown driver kind {kind!r}")


@dataclass(frozen=True)
class Term:
    """One stochastic-integral term: f(t, X) dM + g(t, X) dV for the given driver."""

    f: Coefficient
    g: Coefficient
    driver: Driver

    @property
    def mu(self) -> float:
        return self.f.mu + self.g.mu

    @property
    def c(self) -> float:
        return self.f.c + self.g.c

    def to_dict(self):
        return {"f": self.f.to_dict(), "g": self.g.to_dict(), "driver": self.driver.to_dict()}


def make_term(spec: Mapping) -> Term:
    bad = set(spec) - {"f", "g", "driver"}
    if bad:
        raise InvalidArgument(f"unknown term key(s): {sorted(bad)}")
    return Term(
        make_coefficient(spec.get("f", "zero")),
        make_coefficient(spec.get("g", "zero")),
        make_driver(spec.get("driver", "brownian")),
    )


def audit_coefficients(term: Term, q: float = 1.0, x_range: float = 10.0, points: int = 2001) -> bool:
    """Spot-check the declared growth and Lipschitz constants of a term on a lattice."""
    xs = np.linspace(-x_range, x_range, points)
    for t in np.linspace(0.0, q, 5):
        fv, gv = term.f(t, xs), term.g(t, xs)
        if np.any(np.abs(fv) + np.abs(gv) > term.mu * (1 + np.abs(xs)) + 1e-12):
            return False
        slope = (np.abs(np.diff(fv)) + np.abs(np.diff(gv))) / np.diff(xs)
        if np.any(slope > term.c * (1 + 1e-9) + 1e-12):
            return False
    return True
