"""Mean-constraint functions h, particle ensembles and the maps H, H^{-1}.

H(t, z, Y) = E h(t, Y - EY + z) is strictly increasing in z; its inverse turns a barrier
level on E h(t, X_t) into a level on E X_t.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .grid_paths import GridPath

# Fixed reduction shape: sums are taken per chunk, then the chunk partials are combined
# with a correctly rounded sum, so the result does not depend on the worker count.
CHUNK = 8192
MAX_BISECTION = 200
STOP_FRACTION = 1.0 / 16


def deterministic_mean(values: np.ndarray) -> float:
    if values.size <= CHUNK:
        return math.fsum(values.tolist()) / values.size
    partials = [float(np.sum(values[s : s + CHUNK])) for s in range(0, values.size, CHUNK)]
    return math.fsum(partials) / values.size


def chunked_mean(func: Callable[[np.ndarray], np.ndarray], values: np.ndarray, workers: int = 1) -> float:
    """mean(func(values)) with a fixed chunking; chunks may be evaluated in threads."""
    if values.size <= CHUNK or workers <= 1:
        return deterministic_mean(np.asarray(func(values), dtype=float))
    starts = range(0, values.size, CHUNK)

    def part(s):
        return float(np.sum(func(values[s : s + CHUNK])))

    with ThreadPoolExecutor(max_workers=workers) as pool:
        partials = list(pool.map(part, starts))
    return math.fsum(partials) / values.size


# ---------------------------------------------------------------------------
# h functions


@dataclass(frozen=True)
class MeanConstraintFunction:
    """h(t, x) with its declared constants.

    lambda_h: time-Lipschitz constant; c_h / C_h_upper: lower and upper space-Lipschitz
    constants; M_h: linear-growth constant. ``kind``/``params`` identify the registry entry.
    """

    func: Callable[[float, np.ndarray], np.ndarray] = field(repr=False, compare=False)
    lambda_h: float
    c_h: float
    C_h_upper: float
    M_h: float
    name: str
    kind: str = ""
    params: tuple = ()
    concave: bool = False

    def __call__(self, t, x):
        return self.func(t, x)

    def to_dict(self) -> dict:
        return {"name": self.kind or self.name, **dict(self.params)}


def identity() -> MeanConstraintFunction:
    return MeanConstraintFunction(
        lambda t, x: np.asarray(x, dtype=float) + 0.0,
        lambda_h=0.0, c_h=1.0, C_h_upper=1.0, M_h=1.0,
        name="identity", kind="identity", concave=True,
    )


def affine(a: float, b: float) -> MeanConstraintFunction:
    if not a > 0:
        raise InvalidArgument(f"affine h needs a > 0, got {a}")
    a, b = float(a), float(b)
    return MeanConstraintFunction(
        lambda t, x: a * np.asarray(x, dtype=float) + b,
        lambda_h=0.0, c_h=a, C_h_upper=a, M_h=max(a, abs(b)),
        name=f"affine({a:g},{b:g})", kind="affine", params=(("a", a), ("b", b)), concave=True,
    )


def soft(beta: float) -> MeanConstraintFunction:
    """x + beta*tanh(x); slope 1 + beta*sech^2(x) lies in [1, 1 + beta]."""
    if not 0 <= beta < 1:
        raise InvalidArgument(f"soft h needs 0 <= beta < 1, got {beta}")
    beta = float(beta)
    return MeanConstraintFunction(
        lambda t, x: np.asarray(x, dtype=float) + beta * np.tanh(x),
        lambda_h=0.0, c_h=1.0, C_h_upper=1.0 + beta, M_h=1.0 + beta,
        name=f"soft({beta:g})", kind="soft", params=(("beta", beta),),
    )


def time_tilt(gamma: float, horizon: float) -> MeanConstraintFunction:
    """x + gamma*t*arctan(x) on [0, horizon].

    Slope 1 + gamma*t/(1+x^2) lies in [1, 1 + gamma*horizon], so the upper constant is
    only valid up to the declared horizon.
    """
    if not gamma >= 0:
        raise InvalidArgument(f"time_tilt needs gamma >= 0, got {gamma}")
    if not horizon > 0:
        raise InvalidArgument("time_tilt needs a positive horizon")
    g, q = float(gamma), float(horizon)
    return MeanConstraintFunction(
        lambda t, x: np.asarray(x, dtype=float) + g * t * np.arctan(x),
        lambda_h=g * math.pi / 2, c_h=1.0, C_h_upper=1.0 + g * q,
        M_h=1.0 + g * q * math.pi / 2,
        name=f"time_tilt({g:g})", kind="time_tilt", params=(("gamma", g), ("horizon", q)),
    )


def _softplus(x):
    return np.logaddexp(0.0, x)


def concave(beta: float) -> MeanConstraintFunction:
    """x - beta*softplus(x): concave, slope 1 - beta*sigmoid(x) in (1 - beta, 1)."""
    if not 0 <= beta < 1:
        raise InvalidArgument(f"concave h needs 0 <= beta < 1, got {beta}")
    beta = float(beta)
    return MeanConstraintFunction(
        lambda t, x: np.asarray(x, dtype=float) - beta * _softplus(x),
        lambda_h=0.0, c_h=1.0 - beta, C_h_upper=1.0, M_h=1.0 + beta,
        name=f"concave({beta:g})", kind="concave", params=(("beta", beta),), concave=True,
    )


def rescale(h: MeanConstraintFunction, a: float, b: float) -> MeanConstraintFunction:
    """a*h + b for a > 0, with constants scaled accordingly."""
    if not a > 0:
        raise InvalidArgument(f"rescale needs a > 0, got {a}")
    a, b = float(a), float(b)
    f = h.func
    return MeanConstraintFunction(
        lambda t, x: a * f(t, x) + b,
        lambda_h=a * h.lambda_h, c_h=a * h.c_h, C_h_upper=a * h.C_h_upper,
        M_h=a * h.M_h + abs(b), name=f"{a:g}*{h.name}+{b:g}", concave=h.concave,
    )


REGISTRY: dict[str, Callable[..., MeanConstraintFunction]] = {
    "identity": identity,
    "affine": affine,
    "soft": soft,
    "time_tilt": time_tilt,
    "concave": concave,
}


def make_h(spec: Mapping | str, horizon: float | None = None) -> MeanConstraintFunction:
    """Build a registry h from ``{"name": ..., **params}`` (or a bare name)."""
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name", None)
    if name not in REGISTRY:
        raise InvalidArgument(f"unknown h {name!r}; known: {sorted(REGISTRY)}")
    if name == "time_tilt" and "horizon" not in spec:
        if horizon is None:
            raise InvalidArgument("time_tilt needs a horizon")
        spec["horizon"] = horizon
    try:
        return REGISTRY[name](**spec)
    except TypeError as exc:
        raise InvalidArgument(f"bad parameters for h {name!r}: {exc}") from None


@dataclass
class AuditReport:
    min_slope: float
    max_slope: float
    growth_ratio: float
    time_ratio: float
    ok: bool


def audit(h: MeanConstraintFunction, q: float = 1.0, x_range: float = 10.0, points: int = 10_000) -> AuditReport:
    """Finite-difference check of the declared constants on a lattice of ``points`` points."""
    nt = 10
    nx = points // nt
    ts = np.linspace(0.0, q, nt)
    xs = np.linspace(-x_range, x_range, nx)
    slopes, growth, tdiff = [], [], []
    for t in ts:
        v = h(t, xs)
        slopes.append(np.diff(v) / np.diff(xs))
        growth.append(np.abs(v) / (h.M_h * (1 + np.abs(xs))))
    dt = ts[1] - ts[0]
    for t0, t1 in zip(ts, ts[1:]):
        tdiff.append(np.abs(h(t1, xs) - h(t0, xs)) / dt)
    s = np.concatenate(slopes)
    smin, smax = float(s.min()), float(s.max())
    gr = float(np.max(np.concatenate(growth)))
    tr = float(np.max(np.concatenate(tdiff)))
    ok = (
        smin >= h.c_h * (1 - 1e-6)
        and smax <= h.C_h_upper * (1 + 1e-6)
        and gr <= 1 + 1e-9
        and tr <= h.lambda_h * (1 + 1e-6) + 1e-12
    )
    return AuditReport(smin, smax, gr, tr, ok)


def sup_distance(h1: MeanConstraintFunction, h2: MeanConstraintFunction, q: float,
                 nt: int = 200, nx: int = 2001, x_range: float = 10.0) -> tuple[float, bool]:
    """sup_{[0,q] x R} |h1 - h2|, returned with a flag telling whether it is exact.

    Closed forms cover registry pairs whose difference is known; everything else is
    estimated on an nt x nx lattice over [0, q] x [-x_range, x_range].
    """
    k1, k2 = h1.kind, h2.kind
    p1, p2 = dict(h1.params), dict(h2.params)
    if k1 == k2 and p1 == p2 and k1:
        return 0.0, True
    lin = {"identity": (1.0, 0.0)}
    ab1 = lin.get(k1) or ((p1["a"], p1["b"]) if k1 == "affine" else None)
    ab2 = lin.get(k2) or ((p2["a"], p2["b"]) if k2 == "affine" else None)
    if ab1 and ab2:
        return (abs(ab1[1] - ab2[1]) if ab1[0] == ab2[0] else math.inf), True
    betas = {"identity": 0.0}
    if {k1, k2} <= {"soft", "identity"}:
        b1 = p1.get("beta", betas.get(k1, 0.0))
        b2 = p2.get("beta", betas.get(k2, 0.0))
        return abs(b1 - b2), True
    if k1 == k2 == "time_tilt":
        return abs(p1["gamma"] - p2["gamma"]) * q * math.pi / 2, True
    ts = np.linspace(0.0, q, nt)
    xs = np.linspace(-x_range, x_range, nx)
    return float(max(np.max(np.abs(h1(t, xs) - h2(t, xs))) for t in ts)), False


# ---------------------------------------------------------------------------
# Ensembles and the H maps


class Ensemble:
    """N particle values at one time; the empirical stand-in for a law.

    Particles are sorted once so that every reduction runs in a fixed order; results are
    therefore invariant under permutations of the particle labels.
    """

    def __init__(self, particles, workers: int = 1):
        arr = np.asarray(particles, dtype=float).ravel()
        if arr.size < 1:
            raise InvalidArgument("an ensemble needs at least one particle")
        self.particles = arr
        self.workers = workers

    def __len__(self):
        return self.particles.size

    @cached_property
    def sorted(self) -> np.ndarray:
        return np.sort(self.particles)

    @cached_property
    def mean(self) -> float:
        return deterministic_mean(self.sorted)

    @cached_property
    def centered(self) -> np.ndarray:
        return self.sorted - self.mean

    def expect(self, func: Callable[[np.ndarray], np.ndarray]) -> float:
        return chunked_mean(func, self.sorted, self.workers)

    def std(self) -> float:
        return math.sqrt(deterministic_mean(self.centered**2))


def H_forward(h: MeanConstraintFunction, t: float, z: float, ens: Ensemble) -> float:
    """E h(t, Y - EY + z) under the ensemble's empirical law."""
    c = ens.centered
    return chunked_mean(lambda v: h(t, v + z), c, ens.workers)


def H_inverse(h: MeanConstraintFunction, t: float, target: float, ens: Ensemble, tol: float = 1e-10) -> float:
    """Solve H(t, z, Y) = target inside a guaranteed bracket.

    The bracket [target - r, target + r] with r = |H(target) - target| / c_h contains
    the root by the lower Lipschitz bound. The search shrinks it until the residual is
    below tol / 16 (or the bracket collapses); the answer must have residual <= tol.
    """
    if not tol > 0:
        raise InvalidArgument(f"tol must be positive, got {tol}")
    z0 = float(target)
    f0 = H_forward(h, t, z0, ens) - target
    if abs(f0) <= tol:
        return z0
    r = abs(f0) / h.c_h
    lo, hi = z0 - r, z0 + r
    flo = H_forward(h, t, lo, ens) - target
    fhi = H_forward(h, t, hi, ens) - target
    grow = 0
    while not (flo <= 0 <= fhi):
        # rounding pushed the root outside; widen geometrically
        grow += 1
        if grow > 60:
            raise NumericalFailure("could not bracket the root of H", residual=abs(f0))
        r *= 2
        lo, hi = z0 - r, z0 + r
        flo = H_forward(h, t, lo, ens) - target
        fhi = H_forward(h, t, hi, ens) - target
    best, fbest = (lo, flo) if abs(flo) < abs(fhi) else (hi, fhi)
    # Illinois false position inside the bracket, with a bisection fallback whenever
    # the interpolated point does not land strictly inside.
    target_res = STOP_FRACTION * tol
    side = 0
    for _ in range(MAX_BISECTION):
        if abs(fbest) <= target_res:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        cand = lo - flo * (hi - lo) / (fhi - flo) if fhi != flo else mid
        if not lo < cand < hi:
            cand = mid
        fm = H_forward(h, t, cand, ens) - target
        if abs(fm) < abs(fbest):
            best, fbest = cand, fm
        if fm == 0:
            break
        if fm < 0:
            lo, flo = cand, fm
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = cand, fm
            if side == 1:
                flo *= 0.5
            side = 1
    else:
        raise NumericalFailure("root search hit the iteration cap", residual=abs(fbest))
    if abs(fbest) > tol:
        raise NumericalFailure(
            f"H^-1 residual {abs(fbest):.3e} above tol {tol:.1e}", residual=abs(fbest)
        )
    return best


def transform_barriers(h: MeanConstraintFunction, l: GridPath | None, u: GridPath | None,
                       ensembles, tol: float = 1e-10) -> tuple[GridPath | None, GridPath | None]:
    """Pointwise l_bar_t = H^{-1}(t, l_t, Y_t), u_bar likewise; absent barriers stay absent."""
    out = []
    for path in (l, u):
        if path is None:
            out.append(None)
            continue
        if len(ensembles) != len(path):
            raise InvalidArgument("one ensemble per grid time is required")
        vals = [
            H_inverse(h, float(t), float(v), ens, tol)
            for t, v, ens in zip(path.times, path.values, ensembles)
        ]
        out.append(GridPath(path.grid, np.asarray(vals)))
    return out[0], out[1]
