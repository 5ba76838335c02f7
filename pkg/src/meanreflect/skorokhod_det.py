"""Deterministic Skorokhod problem with two time-dependent barriers on a grid.

Production solver is the clamp recursion ``k_j = max(min(k_{j-1}, u_j - y_j), l_j - y_j)``.
The explicit max/inf/sup formula is kept as an independent cross-check, both as a
linear running scan and as a quadratic direct evaluation for small grids.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation, InvalidArgument
from .grid_paths import (
    BarrierPair,
    GridPath,
    barrier_distance,
    count_oscillations,
    sup_abs,
)

CONTACT_TOL = 1e-12


@dataclass(frozen=True)
class SkorokhodSolution:
    x: GridPath
    k: GridPath


def _check_start(y0: float, l0: float | None, u0: float | None):
    if l0 is not None and y0 < l0:
        raise ConstraintViolation(f"y_0={y0!r} below lower barrier {l0!r} at t=0", time=0.0)
    if u0 is not None and y0 > u0:
        raise ConstraintViolation(f"y_0={y0!r} above upper barrier {u0!r} at t=0", time=0.0)


def _check_grids(y: GridPath, barriers: BarrierPair):
    g = barriers.grid
    if g is not None and g != y.grid:
        raise InvalidArgument("y and barriers must share a grid (refine to the union grid first)")


def clamp_recursion(y, lower, upper, k0: float = 0.0) -> np.ndarray:
    """Run the clamp recursion from ``k_{-1} = k0``; ``lower``/``upper`` may be None.

    Works on plain sequences; the absent side drops its clamp branch entirely.
    """
    ys = y.tolist() if isinstance(y, np.ndarray) else list(y)
    out = [0.0] * len(ys)
    k = k0
    if lower is None and upper is None:
        return np.full(len(ys), float(k0))
    if upper is None:
        ls = lower.tolist() if isinstance(lower, np.ndarray) else list(lower)
        for j, (yj, lj) in enumerate(zip(ys, ls)):
            b = lj - yj
            if b > k:
                k = b
            out[j] = k
    elif lower is None:
        us = upper.tolist() if isinstance(upper, np.ndarray) else list(upper)
        for j, (yj, uj) in enumerate(zip(ys, us)):
            a = uj - yj
            if a < k:
                k = a
            out[j] = k
    else:
        ls = lower.tolist() if isinstance(lower, np.ndarray) else list(lower)
        us = upper.tolist() if isinstance(upper, np.ndarray) else list(upper)
        for j, (yj, lj, uj) in enumerate(zip(ys, ls, us)):
            a = uj - yj
            if a < k:
                k = a
            b = lj - yj
            if b > k:
                k = b
            out[j] = k
    return np.asarray(out)


def solve_two_barrier_recursive(y: GridPath, barriers: BarrierPair) -> SkorokhodSolution:
    _check_grids(y, barriers)
    lo = barriers.lower.values if barriers.lower is not None else None
    up = barriers.upper.values if barriers.upper is not None else None
    _check_start(
        float(y.values[0]),
        None if lo is None else float(lo[0]),
        None if up is None else float(up[0]),
    )
    k = clamp_recursion(y.values, lo, up)
    k[0] = 0.0
    return SkorokhodSolution(x=GridPath(y.grid, y.values + k), k=GridPath(y.grid, k))


def formula_k(y, lower, upper) -> np.ndarray:
    """Evaluate the explicit formula for every grid time with a single running scan.

    With a = y - u and b = y - l,
        k_t = -max(min(0, inf_{u<=t} b_u), sup_{s<=t} min(a_s, inf_{s<=u<=t} b_u)).
    The inner sup-inf F_t obeys F_t = min(max(F_{t-1}, a_t), b_t), and
    inf_{u<=t} b_u is a running minimum. Infinite barriers enter as +-inf.
    """
    a = (np.asarray(y) - np.asarray(upper)).tolist()
    b = (np.asarray(y) - np.asarray(lower)).tolist()
    out = [0.0] * len(a)
    F = -np.inf
    binf = np.inf
    for j, (aj, bj) in enumerate(zip(a, b)):
        if aj > F:
            F = aj
        if bj < F:
            F = bj
        if bj < binf:
            binf = bj
        first = binf if binf < 0.0 else 0.0
        out[j] = -(first if first > F else F)
    return np.asarray(out, dtype=float)


def formula_k_naive(y, lower, upper) -> np.ndarray:
    """Quadratic direct evaluation of the explicit formula (oracle for small grids)."""
    y = np.asarray(y, dtype=float)
    a = y - np.asarray(upper, dtype=float)
    b = y - np.asarray(lower, dtype=float)
    n = y.size
    out = np.empty(n)
    for t in range(n):
        # inner[s] = inf_{s<=u<=t} b_u, a backward running minimum
        inner = np.minimum.accumulate(b[: t + 1][::-1])[::-1]
        first = min(0.0, inner[0])
        second = np.max(np.minimum(a[: t + 1], inner))
        out[t] = -max(first, second)
    return out


def solve_two_barrier_formula(
    y: GridPath, barriers: BarrierPair, naive: bool = False
) -> SkorokhodSolution:
    _check_grids(y, barriers)
    n = len(y)
    lo = barriers.lower_values(n)
    up = barriers.upper_values(n)
    _check_start(
        float(y.values[0]),
        None if barriers.lower is None else float(lo[0]),
        None if barriers.upper is None else float(up[0]),
    )
    if naive:
        if n > 500:
            raise InvalidArgument("naive formula evaluation is limited to 500 grid points")
        k = formula_k_naive(y.values, lo, up)
    else:
        k = formula_k(y.values, lo, up)
    return SkorokhodSolution(x=GridPath(y.grid, y.values + k), k=GridPath(y.grid, k))


def solve_lower(y: GridPath, l: GridPath) -> SkorokhodSolution:
    """One lower barrier: k_t = sup_{s<=t} (l_s - y_s)^+."""
    if l.grid != y.grid:
        raise InvalidArgument("y and l must share a grid")
    _check_start(float(y.values[0]), float(l.values[0]), None)
    k = np.maximum.accumulate(np.maximum(l.values - y.values, 0.0))
    return SkorokhodSolution(x=GridPath(y.grid, y.values + k), k=GridPath(y.grid, k))


def solve_upper(y: GridPath, u: GridPath) -> SkorokhodSolution:
    """One upper barrier: k_t = -sup_{s<=t} (y_s - u_s)^+."""
    if u.grid != y.grid:
        raise InvalidArgument("y and u must share a grid")
    _check_start(float(y.values[0]), None, float(u.values[0]))
    k = -np.maximum.accumulate(np.maximum(y.values - u.values, 0.0))
    return SkorokhodSolution(x=GridPath(y.grid, y.values + k), k=GridPath(y.grid, k))


def variation_bound(
    y: GridPath, l: GridPath, u: GridPath, eta: float, q: float | None = None
) -> float:
    """Upper bound on |k|_q from eta-oscillation counts of y, l and u.

    Requires 0 < 2 eta <= inf_{t<=q}(u_t - l_t) / 3.
    """
    if q is None:
        q = y.grid.horizon
    width = float(np.min(u.upto(q) - l.upto(q)))
    if not (0 < 2 * eta <= width / 3):
        raise InvalidArgument(
            f"band separation fails for eta={eta}: minimal band width is {width!r}, "
            f"need 0 < 2*eta <= {width / 3!r}"
        )
    n_osc = (
        count_oscillations(y, eta, q)
        + count_oscillations(l, eta, q)
        + count_oscillations(u, eta, q)
    )
    scale = sup_abs(y, q) + max(sup_abs(l, q), sup_abs(u, q))
    return 6.0 * (n_osc + 1) * scale


@dataclass(frozen=True)
class StabilityCheck:
    lhs_k: float
    lhs_x: float
    rhs_k: float
    rhs_x: float

    @property
    def k_ok(self) -> bool:
        return self.lhs_k <= self.rhs_k + CONTACT_TOL

    @property
    def x_ok(self) -> bool:
        return self.lhs_x <= self.rhs_x + CONTACT_TOL

    @property
    def ok(self) -> bool:
        return self.k_ok and self.x_ok


def stability_bound_check(
    y1: GridPath, y2: GridPath, b1: BarrierPair, b2: BarrierPair, q: float | None = None
) -> StabilityCheck:
    """Solve both problems and compare with the sup-norm Lipschitz bounds of the map."""
    if q is None:
        q = y1.grid.horizon
    s1 = solve_two_barrier_recursive(y1, b1)
    s2 = solve_two_barrier_recursive(y2, b2)
    dy = float(np.max(np.abs(y1.upto(q) - y2.upto(q))))
    db = barrier_distance(b1, b2, q)
    return StabilityCheck(
        lhs_k=float(np.max(np.abs(s1.k.upto(q) - s2.k.upto(q)))),
        lhs_x=float(np.max(np.abs(s1.x.upto(q) - s2.x.upto(q)))),
        rhs_k=dy + db,
        rhs_x=2 * dy + db,
    )


@dataclass
class AxiomReport:
    containment: list[int]
    complementarity: list[int]

    @property
    def ok(self) -> bool:
        return not self.containment and not self.complementarity


def check_axioms(
    y: GridPath, barriers: BarrierPair, sol: SkorokhodSolution, tol: float = CONTACT_TOL
) -> AxiomReport:
    """Band containment and complementarity of signed increments, per grid index.

    An increase of k is only allowed where x sits on l, a decrease only where x sits on u;
    that is the per-step form of the minimality sign conditions.
    """
    n = len(y)
    x = sol.x.values
    lo = barriers.lower_values(n)
    up = barriers.upper_values(n)
    contain = np.nonzero((x < lo - tol) | (x > up + tol))[0].tolist()
    dk = np.diff(sol.k.values)
    xs = x[1:]
    bad_up = (dk > 0) & ~(np.abs(xs - lo[1:]) <= tol)
    bad_dn = (dk < 0) & ~(np.abs(xs - up[1:]) <= tol)
    comp = (np.nonzero(bad_up | bad_dn)[0] + 1).tolist()
    return AxiomReport(contain, comp)
