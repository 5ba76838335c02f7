"""Mean-reflected SDEs: the Euler-type scheme and the Picard fixed-point construction.

    X_t = X_0 + sum_terms [ int f(s, X_{s-}) dM_s + int g(s, X_{s-}) dV_s ] + k_t,
    E h(t, X_t) in [l_t, u_t],  k deterministic and minimal.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import rng
from .drivers import LANES_PER_TERM, Driver, Term
from .errors import ConstraintViolation, InvalidArgument, NumericalFailure
from .grid_paths import PathSource, TimeGrid, sample
from .mean_map import Ensemble, H_inverse, MeanConstraintFunction, deterministic_mean
from .mean_sp import MeanSkorokhodSolution, stability_constant

log = logging.getLogger(__name__)

X0_LANE = 1 << 20


@dataclass(frozen=True)
class X0Sampler:
    kind: str = "constant"
    value: float = 0.0
    low: float = 0.0
    high: float = 1.0
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "uniform", "gaussian"):
            raise InvalidArgument(f"unknown x0 distribution {self.kind!r}")

    def sample(self, seed: int, particles: np.ndarray) -> np.ndarray:
        if self.kind == "constant":
            return np.full(particles.shape, float(self.value))
        if self.kind == "uniform":
            u = rng.uniform(seed, particles, 0, X0_LANE)
            return self.low + (self.high - self.low) * u
        return self.mean + self.std * rng.normal(seed, particles, 0, X0_LANE)

    @property
    def exact_mean(self) -> float:
        return {"constant": self.value, "uniform": 0.5 * (self.low + self.high), "gaussian": self.mean}[self.kind]

    def to_dict(self):
        if self.kind == "constant":
            return {"dist": "constant", "value": self.value}
        if self.kind == "uniform":
            return {"dist": "uniform", "low": self.low, "high": self.high}
        return {"dist": "gaussian", "mean": self.mean, "std": self.std}


def make_x0(spec) -> X0Sampler:
    if isinstance(spec, (int, float)):
        return X0Sampler("constant", value=float(spec))
    spec = dict(spec)
    kind = spec.pop("dist", "constant")
    try:
        return X0Sampler(kind, **spec)
    except TypeError as exc:
        raise InvalidArgument(f"bad x0 parameters: {exc}") from None


@dataclass
class SimulationConfig:
    x0: X0Sampler
    terms: Sequence[Term]
    h: MeanConstraintFunction
    lower: PathSource | None
    upper: PathSource | None
    n: int = 100
    q: float = 1.0
    N: int = 1000
    seed: int = 0
    tol: float = 1e-10
    workers: int = 1
    fine_n: int | None = None
    store_paths: bool = True
    particle_ids: np.ndarray | None = None

    def particles(self) -> np.ndarray:
        """Stream keys of the simulated particles (default 0..N-1)."""
        if self.particle_ids is None:
            return np.arange(self.N, dtype=np.uint64)
        ids = np.asarray(self.particle_ids, dtype=np.uint64)
        if ids.shape != (self.N,):
            raise InvalidArgument(f"{ids.size} particle ids for N={self.N}")
        return ids

    def grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.n, self.q)

    @property
    def ratio(self) -> int:
        fine = self.fine_n or self.n
        if fine % self.n:
            raise InvalidArgument(f"increment resolution {fine} is not a multiple of n={self.n}")
        return fine // self.n

    def barrier_values(self, grid: TimeGrid):
        lo = None if self.lower is None else sample(self.lower, grid).values
        up = None if self.upper is None else sample(self.upper, grid).values
        if lo is not None and up is not None and np.any(lo > up):
            raise InvalidArgument("lower barrier above upper barrier")
        return lo, up


@dataclass
class _StepState:
    """Increments of every term on one coarse step."""

    dM: list
    dV: list


def _term_increments(cfg: SimulationConfig, grid: TimeGrid, particles: np.ndarray, j: int) -> _StepState:
    fine_dt = 1.0 / (cfg.fine_n or cfg.n)
    dMs, dVs = [], []
    for i, term in enumerate(cfg.terms):
        dM, dV = term.driver.increments(
            cfg.seed, particles, j, cfg.ratio, float(grid.points[j]), float(grid.points[j + 1]),
            fine_dt, lane0=i * LANES_PER_TERM,
        )
        dMs.append(dM)
        dVs.append(dV)
    return _StepState(dMs, dVs)


def _drift(cfg: SimulationConfig, t: float, X: np.ndarray, st: _StepState) -> np.ndarray:
    incr = np.zeros_like(X)
    for term, dM, dV in zip(cfg.terms, st.dM, st.dV):
        incr += term.f(t, X) * dM + term.g(t, X) * dV
    return incr


def _clamp(k: float, y: float, lb: float, ub: float) -> float:
    return max(min(k, ub - y), lb - y)


def _barriers_at(h, t, lo, up, j, ens, tol):
    ub = math.inf if up is None else H_inverse(h, t, float(up[j]), ens, tol)
    lb = -math.inf if lo is None else H_inverse(h, t, float(lo[j]), ens, tol)
    return lb, ub


def _check_start(cfg: SimulationConfig, ens0: Ensemble, lo, up):
    eh0 = ens0.expect(lambda v: cfg.h(0.0, v))
    slack = 2 * cfg.tol
    if lo is not None and eh0 < lo[0] - slack:
        raise ConstraintViolation(f"E h(0, X_0)={eh0!r} below l_0={lo[0]!r}", time=0.0)
    if up is not None and eh0 > up[0] + slack:
        raise ConstraintViolation(f"E h(0, X_0)={eh0!r} above u_0={up[0]!r}", time=0.0)


class _Recorder:
    def __init__(self, cfg, grid, lo, up):
        T = len(grid)
        self.cfg, self.grid = cfg, grid
        self.k = np.zeros(T)
        self.y = np.zeros(T)
        self.lbar = None if lo is None else np.zeros(T)
        self.ubar = None if up is None else np.zeros(T)
        self.eh = np.zeros(T)
        self.xm = np.zeros(T)
        self.xs = np.zeros(T)
        self.lo, self.up = lo, up
        self.X = np.zeros((T, cfg.N)) if cfg.store_paths else None
        self.Y = np.zeros((T, cfg.N)) if cfg.store_paths else None

    def record(self, j, t, k, yens: Ensemble, lb, ub, X, Y):
        self.k[j] = k
        self.y[j] = yens.mean
        if self.lbar is not None:
            self.lbar[j] = lb
        if self.ubar is not None:
            self.ubar[j] = ub
        xens = Ensemble(X, self.cfg.workers)
        self.eh[j] = xens.expect(lambda v: self.cfg.h(t, v))
        self.xm[j] = xens.mean
        self.xs[j] = xens.std()
        if self.X is not None:
            self.X[j] = X
            self.Y[j] = Y

    def solution(self, diagnostics) -> MeanSkorokhodSolution:
        return MeanSkorokhodSolution(
            grid=self.grid, k=self.k, y=self.y, l=self.lo, u=self.up,
            lbar=self.lbar, ubar=self.ubar, eh=self.eh, x_mean=self.xm, x_std=self.xs,
            X=self.X, Y=self.Y, diagnostics=diagnostics,
        )


def euler_mean_reflected(cfg: SimulationConfig) -> MeanSkorokhodSolution:
    """Euler-type scheme: explicit update of Y, then the clamp update of k on the new law.

    Coefficients are evaluated at the right end time of each step and the left state,
    exactly as the scheme is written.
    """
    grid = cfg.grid()
    lo, up = cfg.barrier_values(grid)
    particles = cfg.particles()
    X = cfg.x0.sample(cfg.seed, particles)
    Y = X.copy()
    ens = Ensemble(Y, cfg.workers)
    _check_start(cfg, ens, lo, up)
    rec = _Recorder(cfg, grid, lo, up)
    lb, ub = _barriers_at(cfg.h, 0.0, lo, up, 0, ens, cfg.tol)
    k = 0.0
    rec.record(0, 0.0, k, ens, lb, ub, X, Y)
    step_seconds = []
    for j in range(len(grid) - 1):
        t0 = time.perf_counter()
        t = float(grid.points[j + 1])
        st = _term_increments(cfg, grid, particles, j)
        Y = Y + _drift(cfg, t, X, st)
        ens = Ensemble(Y, cfg.workers)
        try:
            lb, ub = _barriers_at(cfg.h, t, lo, up, j + 1, ens, cfg.tol)
        except NumericalFailure as exc:
            exc.diagnostics["step"] = j + 1
            raise
        k = _clamp(k, ens.mean, lb, ub)
        X = Y + k
        rec.record(j + 1, t, k, ens, lb, ub, X, Y)
        step_seconds.append(time.perf_counter() - t0)
    return rec.solution({"step_seconds": step_seconds})


def plain_euler(cfg: SimulationConfig) -> np.ndarray:
    """Unreflected Euler paths (T x N) driven by the same increments."""
    grid = cfg.grid()
    particles = cfg.particles()
    X = cfg.x0.sample(cfg.seed, particles)
    out = np.zeros((len(grid), cfg.N))
    out[0] = X
    for j in range(len(grid) - 1):
        st = _term_increments(cfg, grid, particles, j)
        X = X + _drift(cfg, float(grid.points[j + 1]), X, st)
        out[j + 1] = X
    return out


# ---------------------------------------------------------------------------
# Picard construction


@dataclass
class PicardInterval:
    start: float
    end: float
    iterations: int
    distances: list[float]
    ratios: list[float]

    @property
    def max_ratio(self) -> float:
        return max(self.ratios, default=0.0)


def contraction_factor(cfg: SimulationConfig, m_hat: Sequence[float]) -> float:
    """sum over terms of (C_h + 1) * c * max(m_hat, 3 sqrt(m_hat))."""
    C_h, _ = stability_constant(cfg.h, cfg.h)
    total = 0.0
    for term, m in zip(cfg.terms, m_hat):
        total += (C_h + 1) * term.c * max(m, 3 * math.sqrt(max(m, 0.0)))
    return total


def contraction_intervals(cfg: SimulationConfig, grid: TimeGrid) -> list[tuple[int, int]]:
    """Grid index intervals [a, b): b is the first grid index where the factor exceeds 1/2.

    The last interval ends at len(grid) when the threshold is never reached.
    """
    T = len(grid)
    ms = [term.driver.m(grid.points) for term in cfg.terms]
    out = []
    a = 0
    while a < T - 1:
        b = a + 1
        while b < T and contraction_factor(cfg, [m[b] - m[a] for m in ms]) <= 0.5:
            b += 1
        out.append((a, b))
        a = b
    return out


def picard_solve(cfg: SimulationConfig, picard_tol: float = 1e-10, max_iter: int = 200
                 ) -> tuple[MeanSkorokhodSolution, list[PicardInterval]]:
    """Fixed-point iteration of the solution map on successive contraction intervals.

    On [t_a, t_b) the map plugs the current X into the stochastic integrals and re-solves
    the mean Skorokhod problem continuing from k_a; the interval is closed at t_b by the
    one-step jump formula for k.
    """
    if not cfg.store_paths:
        cfg = replace(cfg, store_paths=True)
    grid = cfg.grid()
    T = len(grid)
    lo, up = cfg.barrier_values(grid)
    particles = cfg.particles()
    X0 = cfg.x0.sample(cfg.seed, particles)
    ens0 = Ensemble(X0, cfg.workers)
    _check_start(cfg, ens0, lo, up)
    rec = _Recorder(cfg, grid, lo, up)
    lb, ub = _barriers_at(cfg.h, 0.0, lo, up, 0, ens0, cfg.tol)
    rec.record(0, 0.0, 0.0, ens0, lb, ub, X0, X0.copy())
    steps = [_term_increments(cfg, grid, particles, j) for j in range(T - 1)]

    Xa, Ya, ka = X0, X0.copy(), 0.0
    log_rows: list[PicardInterval] = []
    for a, b in contraction_intervals(cfg, grid):
        last = min(b, T)
        L = last - a  # rows a .. last-1, row a known
        Xcur = np.repeat(Xa[None, :], L, axis=0)
        dists, ratios = [], []
        it = 0
        rows = None
        while L > 1:
            it += 1
            incr = np.empty((L - 1, cfg.N))
            for i in range(L - 1):
                j = a + i
                incr[i] = _drift(cfg, float(grid.points[j + 1]), Xcur[i], steps[j])
            Yrows = np.cumsum(np.vstack([Ya[None, :], incr]), axis=0)
            k = ka
            rows = []
            Xnew = np.empty_like(Xcur)
            Xnew[0] = Xa
            for i in range(1, L):
                j = a + i
                t = float(grid.points[j])
                ens = Ensemble(Yrows[i], cfg.workers)
                lb, ub = _barriers_at(cfg.h, t, lo, up, j, ens, cfg.tol)
                k = _clamp(k, ens.mean, lb, ub)
                Xnew[i] = Yrows[i] + k
                rows.append((j, t, k, ens, lb, ub))
            d = deterministic_mean(np.sort(np.abs(Xnew - Xcur).max(axis=0)))
            if dists and dists[-1] > 0:
                ratios.append(d / dists[-1])
            dists.append(d)
            Xcur = Xnew
            if len(ratios) >= 3 and min(ratios[-3:]) > 0.9:
                raise NumericalFailure(
                    "Picard map is not contracting; check the declared constants",
                    residual=d, interval=(float(grid.points[a]), float(grid.points[min(b, T - 1)])),
                    ratios=ratios,
                )
            if d <= picard_tol:
                break
            if it >= max_iter:
                raise NumericalFailure("Picard iteration cap reached", residual=d)
        if rows:
            for (j, t, k, ens, lb_, ub_), i in zip(rows, range(1, L)):
                rec.record(j, t, k, ens, lb_, ub_, Xcur[i], Yrows[i])
            Xa, Ya, ka = Xcur[-1], Yrows[-1], rows[-1][2]
        log_rows.append(PicardInterval(float(grid.points[a]), float(grid.points[last - 1]) if b >= T else float(grid.points[b]),
                                       it, dists, ratios))
        if b < T:
            # close the interval with the one-step jump formula
            t = float(grid.points[b])
            Yb = Ya + _drift(cfg, t, Xa, steps[b - 1])
            ens = Ensemble(Yb, cfg.workers)
            lb, ub = _barriers_at(cfg.h, t, lo, up, b, ens, cfg.tol)
            ka = _clamp(ka, ens.mean, lb, ub)
            Xa, Ya = Yb + ka, Yb
            rec.record(b, t, ka, ens, lb, ub, Xa, Ya)
    sol = rec.solution({"intervals": len(log_rows)})
    return sol, log_rows


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass
class MartingaleEstimate:
    lhs: float
    lhs_std: float
    rhs: float
    N: int

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + 3 * self.lhs_std / math.sqrt(self.N)


def mean_estimate_4_1(driver: Driver, t: float, N: int = 10_000, n: int = 200, seed: int = 0) -> MartingaleEstimate:
    """Monte Carlo E sup_{s<t} |M_s| against 3 (<M>_{t-})^{1/2}."""
    grid = TimeGrid.uniform(n, t)
    particles = np.arange(N, dtype=np.uint64)
    M = np.zeros(N)
    sup = np.zeros(N)
    fine_dt = 1.0 / n
    stop = int(np.searchsorted(grid.points, t - 1e-12))  # grid points strictly before t
    for j in range(stop - 1):
        dM, _ = driver.increments(seed, particles, j, 1, float(grid.points[j]), float(grid.points[j + 1]), fine_dt)
        M = M + dM
        np.maximum(sup, np.abs(M), out=sup)
    srt = np.sort(sup)
    mean = deterministic_mean(srt)
    std = math.sqrt(deterministic_mean(np.sort((sup - mean) ** 2)))
    return MartingaleEstimate(mean, std, 3 * math.sqrt(driver.qv_rate * t), N)


def bracket_audit(driver: Driver, n: int, q: float, N: int = 10_000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Empirical mean of sum (dM)^2 along the grid, and m on the grid."""
    grid = TimeGrid.uniform(n, q)
    particles = np.arange(N, dtype=np.uint64)
    qv = np.zeros(N)
    out = [0.0]
    for j in range(len(grid) - 1):
        dM, _ = driver.increments(seed, particles, j, 1, float(grid.points[j]), float(grid.points[j + 1]), 1.0 / n)
        qv += dM * dM
        out.append(deterministic_mean(np.sort(qv)))
    return np.asarray(out), driver.m(grid.points)


def discretized_bracket(driver: Driver, grid: TimeGrid) -> np.ndarray:
    """Predictable bracket of the discretized martingale: sum of per-step variances."""
    return np.concatenate([[0.0], np.cumsum(driver.qv_rate * np.diff(grid.points))])


# ---------------------------------------------------------------------------
# Grid refinement


@dataclass
class ConvergenceRow:
    n: int
    err_k: float
    err_X: float


@dataclass
class ConvergenceTable:
    rows: list[ConvergenceRow]
    reference_n: int
    noise_allowance: float = 0.2
    # errors below this are round-off and compare as equal
    noise_floor: float = 1e-12

    def _nonincreasing(self, errs) -> bool:
        return all(b <= a * (1 + self.noise_allowance) + self.noise_floor for a, b in zip(errs, errs[1:]))

    @property
    def monotone(self) -> bool:
        return self._nonincreasing([r.err_k for r in self.rows])

    @property
    def monotone_X(self) -> bool:
        return self._nonincreasing([r.err_X for r in self.rows])


def convergence_study(cfg: SimulationConfig, n_list: Sequence[int], reference_n: int,
                      exact_k=None) -> ConvergenceTable:
    """Run the Euler scheme on coarse grids driven by increments aggregated from the
    reference grid and measure the max-over-grid distance to the reference run.

    ``exact_k`` (a callable of t) replaces the reference for k when a closed form exists.
    """
    for n in n_list:
        if reference_n % n:
            raise InvalidArgument(f"reference_n={reference_n} is not a multiple of n={n}")
    ref = euler_mean_reflected(replace(cfg, n=reference_n, fine_n=reference_n, store_paths=True))
    rows = []
    for n in sorted(n_list):
        sol = euler_mean_reflected(replace(cfg, n=n, fine_n=reference_n, store_paths=True))
        r = reference_n // n
        idx = np.arange(len(sol.grid)) * r
        k_ref = exact_k(sol.grid.points) if exact_k is not None else ref.k[idx]
        err_k = float(np.max(np.abs(sol.k - k_ref)))
        dX = np.abs(sol.X - ref.X[idx]).max(axis=0)
        rows.append(ConvergenceRow(n, err_k, deterministic_mean(np.sort(dX))))
        log.info("n=%d err_k=%.3e err_X=%.3e", n, err_k, rows[-1].err_X)
    return ConvergenceTable(rows, reference_n)
