"""Skorokhod problem with a mean minimality condition E h(t, X_t) in [l_t, u_t].

The solver follows the constructive route: transform the barriers through H^{-1} on the
law of Y, solve a deterministic problem for (EY, l_bar, u_bar), then shift every particle
by the resulting deterministic k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import skorokhod_det as det
from .errors import ConstraintViolation, InvalidArgument, NumericalFailure
from .grid_paths import BarrierPair, GridPath, TimeGrid, barrier_distance, sample
from .mean_map import (
    Ensemble,
    H_inverse,
    MeanConstraintFunction,
    deterministic_mean,
    sup_distance,
    transform_barriers,
)

FORMULA_AGREEMENT = 1e-10


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """N sampled paths of a process on a common grid; ``paths[j, i]`` is particle i at t_j."""

    grid: TimeGrid
    paths: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.paths, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[0] != len(self.grid):
            raise InvalidArgument(f"{arr.shape[0]} rows for a grid of {len(self.grid)} points")
        object.__setattr__(self, "paths", arr)

    @property
    def n_particles(self) -> int:
        return self.paths.shape[1]

    def ensembles(self, workers: int = 1) -> list[Ensemble]:
        return [Ensemble(row, workers) for row in self.paths]

    def mean_path(self) -> GridPath:
        return GridPath(self.grid, [deterministic_mean(np.sort(row)) for row in self.paths])

    def discretize(self, n: int, q: float) -> "PathEnsemble":
        """Sample every path at the points k/n <= q (step evaluation)."""
        g = TimeGrid.uniform(n, q)
        return PathEnsemble(g, self.paths[self.grid.index(g.points)])


@dataclass
class MeanSkorokhodProblem:
    Y: PathEnsemble
    h: MeanConstraintFunction
    barriers: BarrierPair
    tol: float = 1e-10
    workers: int = 1

    def __post_init__(self):
        g = self.barriers.grid
        if g is not None and g != self.Y.grid:
            raise InvalidArgument("barriers and Y must share a grid")

    @property
    def grid(self) -> TimeGrid:
        return self.Y.grid

    def check_admissible(self, ens0: Ensemble | None = None):
        ens0 = ens0 or Ensemble(self.Y.paths[0], self.workers)
        eh0 = ens0.expect(lambda v: self.h(0.0, v))
        slack = 2 * self.tol
        lo, up = self.barriers.lower, self.barriers.upper
        if lo is not None and eh0 < lo.values[0] - slack:
            raise ConstraintViolation(f"E h(0, Y_0)={eh0!r} below l_0={lo.values[0]!r}", time=0.0)
        if up is not None and eh0 > up.values[0] + slack:
            raise ConstraintViolation(f"E h(0, Y_0)={eh0!r} above u_0={up.values[0]!r}", time=0.0)


@dataclass
class MeanSkorokhodSolution:
    """Solution record; per-particle paths are optional (large runs keep summaries only)."""

    grid: TimeGrid
    k: np.ndarray
    y: np.ndarray
    l: np.ndarray | None
    u: np.ndarray | None
    lbar: np.ndarray | None
    ubar: np.ndarray | None
    eh: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray
    X: np.ndarray | None = None
    Y: np.ndarray | None = None
    formula_gap: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def k_path(self) -> GridPath:
        return GridPath(self.grid, self.k)

    def columns(self) -> dict[str, np.ndarray]:
        n = len(self.grid)
        fill = lambda a, s: a if a is not None else np.full(n, s)  # noqa: E731
        return {
            "t": self.grid.points,
            "y": self.y,
            "l": fill(self.l, -np.inf),
            "u": fill(self.u, np.inf),
            "lbar": fill(self.lbar, -np.inf),
            "ubar": fill(self.ubar, np.inf),
            "k": self.k,
            "eh": self.eh,
            "x_mean": self.x_mean,
            "x_std": self.x_std,
        }


def _vals(p: GridPath | None):
    return None if p is None else p.values


def _summaries(h, grid, X: np.ndarray, workers: int):
    eh, xm, xs = [], [], []
    for t, row in zip(grid.points, X):
        ens = Ensemble(row, workers)
        eh.append(ens.expect(lambda v, t=t: h(t, v)))
        xm.append(ens.mean)
        xs.append(ens.std())
    return np.asarray(eh), np.asarray(xm), np.asarray(xs)


def solve_mean_two_barrier(p: MeanSkorokhodProblem, cross_check: bool = True) -> MeanSkorokhodSolution:
    """Solve with either or both barriers present (absent side = unbounded)."""
    ens = p.Y.ensembles(p.workers)
    p.check_admissible(ens[0])
    y = np.array([e.mean for e in ens])
    lbar, ubar = transform_barriers(p.h, p.barriers.lower, p.barriers.upper, ens, p.tol)
    lb, ub = _vals(lbar), _vals(ubar)
    k = det.clamp_recursion(y, lb, ub)
    k[0] = 0.0
    gap = 0.0
    if cross_check:
        n = y.size
        kf = det.formula_k(
            y,
            lb if lb is not None else np.full(n, -np.inf),
            ub if ub is not None else np.full(n, np.inf),
        )
        gap = float(np.max(np.abs(kf - k)))
        if gap > FORMULA_AGREEMENT:
            raise NumericalFailure(f"recursion and explicit formula disagree by {gap:.3e}", residual=gap)
    X = p.Y.paths + k[:, None]
    eh, xm, xs = _summaries(p.h, p.grid, X, p.workers)
    return MeanSkorokhodSolution(
        grid=p.grid, k=k, y=y,
        l=_vals(p.barriers.lower), u=_vals(p.barriers.upper),
        lbar=lb, ubar=ub, eh=eh, x_mean=xm, x_std=xs,
        X=X, Y=p.Y.paths, formula_gap=gap,
    )


def solve_mean_lower(p: MeanSkorokhodProblem) -> MeanSkorokhodSolution:
    """Lower barrier only: k_t = sup_{s<=t} (l_bar_s - EY_s)^+."""
    if p.barriers.lower is None or p.barriers.upper is not None:
        raise InvalidArgument("solve_mean_lower needs a lower barrier and no upper barrier")
    ens = p.Y.ensembles(p.workers)
    p.check_admissible(ens[0])
    y = np.array([e.mean for e in ens])
    lbar, _ = transform_barriers(p.h, p.barriers.lower, None, ens, p.tol)
    k = np.maximum.accumulate(np.maximum(lbar.values - y, 0.0))
    k[0] = 0.0
    X = p.Y.paths + k[:, None]
    eh, xm, xs = _summaries(p.h, p.grid, X, p.workers)
    return MeanSkorokhodSolution(
        grid=p.grid, k=k, y=y, l=p.barriers.lower.values, u=None,
        lbar=lbar.values, ubar=None, eh=eh, x_mean=xm, x_std=xs, X=X, Y=p.Y.paths,
    )


def solve_mean_upper(p: MeanSkorokhodProblem) -> MeanSkorokhodSolution:
    """Upper barrier only: k_t = -sup_{s<=t} (u_bar_s - EY_s)^-."""
    if p.barriers.upper is None or p.barriers.lower is not None:
        raise InvalidArgument("solve_mean_upper needs an upper barrier and no lower barrier")
    ens = p.Y.ensembles(p.workers)
    p.check_admissible(ens[0])
    y = np.array([e.mean for e in ens])
    _, ubar = transform_barriers(p.h, None, p.barriers.upper, ens, p.tol)
    k = -np.maximum.accumulate(np.maximum(y - ubar.values, 0.0))
    k[0] = 0.0
    X = p.Y.paths + k[:, None]
    eh, xm, xs = _summaries(p.h, p.grid, X, p.workers)
    return MeanSkorokhodSolution(
        grid=p.grid, k=k, y=y, l=None, u=p.barriers.upper.values,
        lbar=None, ubar=ubar.values, eh=eh, x_mean=xm, x_std=xs, X=X, Y=p.Y.paths,
    )


def minimal_push(h: MeanConstraintFunction, t: float, particles: np.ndarray, level: float,
                 direction: int = 1, tol: float = 1e-12) -> float:
    """inf{x >= 0 : E h(t, Y + x) >= level} (direction=+1) or
    inf{x >= 0 : E h(t, Y - x) <= level} (direction=-1), by direct monotone search.

    Works on raw particles without centering, so it is an independent route to the
    one-barrier reflection amounts.
    """
    ens = Ensemble(particles)
    if direction > 0:
        ok = lambda x: ens.expect(lambda v: h(t, v + x)) >= level  # noqa: E731
    else:
        ok = lambda x: ens.expect(lambda v: h(t, v - x)) <= level  # noqa: E731
    if ok(0.0):
        return 0.0
    hi = 1.0
    while not ok(hi):
        hi *= 2
    lo = 0.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Verification


@dataclass
class MinimalityReport:
    band_violations: list[int]
    sign_violations: list[tuple[int, int]]
    integral_lower: float
    integral_upper: float
    integral_limit: float
    complementarity_violations: list[int]

    @property
    def integrals_ok(self) -> bool:
        return self.integral_lower <= self.integral_limit and self.integral_upper <= self.integral_limit

    @property
    def ok(self) -> bool:
        return (
            not self.band_violations
            and not self.sign_violations
            and self.integrals_ok
            and not self.complementarity_violations
        )

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "band_violations": self.band_violations,
            "sign_violations": [list(v) for v in self.sign_violations],
            "integral_lower": self.integral_lower,
            "integral_upper": self.integral_upper,
            "integral_limit": self.integral_limit,
            "complementarity_violations": self.complementarity_violations,
        }


def _max_interval_sum(terms: np.ndarray, regions: np.ndarray) -> float:
    """Largest sum of consecutive terms over runs where ``regions`` is True (Kadane)."""
    best = -math.inf
    cur = -math.inf
    for term, inside in zip(terms.tolist(), regions.tolist()):
        if not inside:
            cur = -math.inf
            continue
        cur = term if cur < 0 or cur == -math.inf else cur + term
        if cur > best:
            best = cur
    return best


def verify_minimality(k, eh, l, u, tol: float = 1e-10) -> MinimalityReport:
    """Diagnose a solution record against the constraint and minimality conditions.

    Works on arrays so that solution files without particles can be checked.
    ``l``/``u`` may be None or contain +-inf for absent barriers.
    """
    k = np.asarray(k, dtype=float)
    eh = np.asarray(eh, dtype=float)
    n = k.size
    lo = np.full(n, -np.inf) if l is None else np.asarray(l, dtype=float)
    up = np.full(n, np.inf) if u is None else np.asarray(u, dtype=float)
    eps = 2 * tol

    band = np.nonzero((eh < lo - eps) | (eh > up + eps))[0].tolist()

    dk = np.diff(k)
    e1, l1, u1 = eh[1:], lo[1:], up[1:]
    # per-step signs: k may rise only while E h < u, fall only while E h > l
    inside_up = e1 < u1 - eps
    inside_lo = e1 > l1 + eps
    signs = []
    for mask, bad, kind in ((inside_up, dk < 0, -1), (inside_lo, dk > 0, +1)):
        for j in np.nonzero(mask & bad)[0].tolist():
            signs.append((j + 1, kind))
    signs.sort()

    # Stieltjes sums of (E h - l) dk and (E h - u) dk over every grid interval on which
    # the band has positive width; each term is ~<= 0 for a valid solution.
    with np.errstate(invalid="ignore"):
        t_lo = np.where(dk == 0, 0.0, (e1 - l1) * dk)
        t_up = np.where(dk == 0, 0.0, (e1 - u1) * dk)
    regions = (u1 - l1) > 0
    int_lo = max(0.0, _max_interval_sum(t_lo, regions))
    int_up = max(0.0, _max_interval_sum(t_up, regions))
    limit = eps * float(np.sum(np.abs(dk)))

    comp = np.nonzero(
        ((dk > 0) & ~(np.abs(e1 - l1) <= eps)) | ((dk < 0) & ~(np.abs(e1 - u1) <= eps))
    )[0]
    return MinimalityReport(band, signs, int_lo, int_up, limit, (comp + 1).tolist())


def verify_solution(sol: MeanSkorokhodSolution, tol: float = 1e-10) -> MinimalityReport:
    return verify_minimality(sol.k, sol.eh, sol.l, sol.u, tol)


# ---------------------------------------------------------------------------
# Stability, modulus and variation bounds


def stability_constant(h1: MeanConstraintFunction, h2: MeanConstraintFunction) -> tuple[float, float]:
    """(conservative, literal) readings of the Lipschitz constant of the mean reflection map.

    The literal reading uses the printed lower constants max(1/c1, 2*c2/c1 + 1). The
    conservative one uses the smallest lower and largest upper constant of the pair.
    """
    c = min(h1.c_h, h2.c_h)
    C = max(h1.C_h_upper, h2.C_h_upper)
    conservative = max(1.0 / c, 2.0 * C / c + 1.0)
    literal = max(1.0 / h1.c_h, 2.0 * h2.c_h / h1.c_h + 1.0)
    return conservative, literal


@dataclass
class StabilityReport:
    lhs_k: float
    lhs_X: float
    rhs_k: float
    rhs_X: float
    C_h: float
    C_h_literal: float
    h_distance: float
    h_distance_exact: bool
    y_distance: float
    y_sup_distance: float
    barrier_distance: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.lhs_k <= self.rhs_k + self.slack and self.lhs_X <= self.rhs_X + self.slack


def stability_report(p1: MeanSkorokhodProblem, p2: MeanSkorokhodProblem, q: float | None = None) -> StabilityReport:
    """Compare two paired problems (same grid, particle i of p1 coupled with particle i of p2)."""
    if p1.grid != p2.grid:
        raise InvalidArgument("stability report needs a common grid")
    if p1.Y.n_particles != p2.Y.n_particles:
        raise InvalidArgument("stability report needs paired particles")
    q = p1.grid.horizon if q is None else q
    j = p1.grid.last_index(q) + 1
    s1 = solve_mean_two_barrier(p1)
    s2 = solve_mean_two_barrier(p2)
    C, C_lit = stability_constant(p1.h, p2.h)
    hd, exact = sup_distance(p1.h, p2.h, q)
    dY = np.abs(p1.Y.paths[:j] - p2.Y.paths[:j])
    y_dist = max(deterministic_mean(np.sort(row)) for row in dY)
    y_sup = deterministic_mean(np.sort(dY.max(axis=0)))
    bd = barrier_distance(p1.barriers, p2.barriers, q)
    dX = np.abs(s1.X[:j] - s2.X[:j]).max(axis=0)
    slack = 2 * max(p1.tol, p2.tol) / min(p1.h.c_h, p2.h.c_h) + 1e-12
    return StabilityReport(
        lhs_k=float(np.max(np.abs(s1.k[:j] - s2.k[:j]))),
        lhs_X=deterministic_mean(np.sort(dX)),
        rhs_k=C * (hd + y_dist + bd),
        rhs_X=(C + 1) * y_sup + C * (hd + bd),
        C_h=C, C_h_literal=C_lit, h_distance=hd, h_distance_exact=exact,
        y_distance=y_dist, y_sup_distance=y_sup, barrier_distance=bd, slack=slack,
    )


@dataclass
class ModulusReport:
    lhs_k: float
    rhs_k: float
    lhs_X: float
    rhs_X: float
    slack: float

    @property
    def ok(self) -> bool:
        return self.lhs_k <= self.rhs_k + self.slack and self.lhs_X <= self.rhs_X + self.slack


def modulus_report(p: MeanSkorokhodProblem, t: float, q: float,
                   sol: MeanSkorokhodSolution | None = None) -> ModulusReport:
    """Modulus of continuity of k and X on [t, q] against its a-priori bound."""
    if t > q:
        raise InvalidArgument("need t <= q")
    g = p.grid
    i, j = g.last_index(t), g.last_index(q) + 1
    sol = sol or solve_mean_two_barrier(p)
    C, _ = stability_constant(p.h, p.h)
    Yw = p.Y.paths[i:j]
    dY = np.abs(Yw - Yw[0])
    y_mod = max(deterministic_mean(np.sort(row)) for row in dY)
    y_sup = deterministic_mean(np.sort(dY.max(axis=0)))
    bmod = 0.0
    for b in (p.barriers.lower, p.barriers.upper):
        if b is not None:
            w = b.values[i:j]
            bmod = max(bmod, float(np.max(np.abs(w - w[0]))))
    span = g.points[j - 1] - g.points[i]
    lam = p.h.lambda_h * span
    Xw = sol.X[i:j]
    return ModulusReport(
        lhs_k=float(np.max(np.abs(sol.k[i:j] - sol.k[i]))),
        rhs_k=C * (y_mod + lam + bmod),
        lhs_X=deterministic_mean(np.sort(np.abs(Xw - Xw[0]).max(axis=0))),
        rhs_X=(C + 1) * y_sup + C * (lam + bmod),
        slack=2 * p.tol / p.h.c_h + 1e-12,
    )


def mean_variation_bound(sol: MeanSkorokhodSolution, eta: float, q: float | None = None) -> float:
    """Variation bound for k from eta-oscillations of EY and the transformed barriers.

    The band precondition is tested on the transformed barriers.
    """
    if sol.lbar is None or sol.ubar is None:
        raise InvalidArgument("variation bound needs both barriers")
    g = sol.grid
    q = g.horizon if q is None else q
    y, lb, ub = GridPath(g, sol.y), GridPath(g, sol.lbar), GridPath(g, sol.ubar)
    return det.variation_bound(y, lb, ub, eta, q)


# ---------------------------------------------------------------------------
# Discretized scheme


def discretized_scheme(Y: PathEnsemble, h: MeanConstraintFunction, l, u, n: int, q: float,
                       tol: float = 1e-10, workers: int = 1) -> MeanSkorokhodSolution:
    """Discretize Y, l, u on {k/n} and run the stepwise clamp recursion directly.

    ``l``/``u`` are path sources (GridPath, PiecewisePath, callables, constants) or None.
    At every step the transformed barriers come from H^{-1} on the current ensemble.
    """
    Yn = Y.discretize(n, q)
    g = Yn.grid
    ln = None if l is None else sample(l, g)
    un = None if u is None else sample(u, g)
    prob = MeanSkorokhodProblem(Yn, h, BarrierPair(ln, un), tol, workers)
    ens0 = Ensemble(Yn.paths[0], workers)
    prob.check_admissible(ens0)
    T = len(g)
    k = np.zeros(T)
    y = np.empty(T)
    lb = None if ln is None else np.empty(T)
    ub = None if un is None else np.empty(T)
    kk = 0.0
    for j in range(T):
        ens = ens0 if j == 0 else Ensemble(Yn.paths[j], workers)
        t = float(g.points[j])
        y[j] = ens.mean
        hi_b = math.inf if un is None else H_inverse(h, t, float(un.values[j]), ens, tol)
        lo_b = -math.inf if ln is None else H_inverse(h, t, float(ln.values[j]), ens, tol)
        if ub is not None:
            ub[j] = hi_b
        if lb is not None:
            lb[j] = lo_b
        if j > 0:
            kk = max(min(kk, hi_b - y[j]), lo_b - y[j])
        k[j] = kk
    X = Yn.paths + k[:, None]
    eh, xm, xs = _summaries(h, g, X, workers)
    return MeanSkorokhodSolution(
        grid=g, k=k, y=y, l=_vals(ln), u=_vals(un), lbar=lb, ubar=ub,
        eh=eh, x_mean=xm, x_std=xs, X=X, Y=Yn.paths,
    )


__all__ = [
    "PathEnsemble",
    "MeanSkorokhodProblem",
    "MeanSkorokhodSolution",
    "solve_mean_two_barrier",
    "solve_mean_lower",
    "solve_mean_upper",
    "minimal_push",
    "verify_minimality",
    "verify_solution",
    "stability_report",
    "modulus_report",
    "mean_variation_bound",
    "discretized_scheme",
    "stability_constant",
]
