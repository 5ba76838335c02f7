"""Insurance-reserve investment with a deterministic capital-injection strategy.

The amount X held in stock satisfies
    X_t = x + int X b ds + int X sigma dW + J_t + k_t
with J a reserve process with independent increments, and the law constraint
E h(t, X_t) in [l_t, u_t] for a concave h. The strategy holds pi = X / S shares.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drivers import JumpLaw, Term, brownian, make_coefficient, pii
from .errors import InvalidArgument
from .grid_paths import PathSource
from .mean_map import Ensemble, H_inverse, MeanConstraintFunction
from .mean_sp import MeanSkorokhodSolution
from .sde import SimulationConfig, X0Sampler, _term_increments, euler_mean_reflected

EPS = np.finfo(float).eps


@dataclass
class InvestmentParams:
    x0: float = 1.0
    b: float = 0.05
    sigma: float = 0.2
    s0: float = 1.0
    premium: float = 0.0
    reserve_sigma: float = 0.0
    claim_rate: float = 0.0
    claims: JumpLaw | None = None
    h: MeanConstraintFunction | None = None
    lower: PathSource | None = None
    upper: PathSource | None = None

    def terms(self) -> list[Term]:
        out = [Term(make_coefficient({"name": "linear", "a": self.sigma}),
                    make_coefficient({"name": "linear", "a": self.b}), brownian(1.0))]
        has_j = self.premium != 0.0 or self.reserve_sigma != 0.0 or (self.claim_rate > 0 and self.claims)
        if has_j:
            drv = pii(drift=self.premium, sigma=self.reserve_sigma, rate=self.claim_rate, jump=self.claims)
            one = make_coefficient({"name": "const", "value": 1.0})
            out.append(Term(one, one, drv))
        return out


@dataclass
class InvestmentResult:
    solution: MeanSkorokhodSolution
    S: np.ndarray
    pi: np.ndarray
    wealth: np.ndarray
    L: np.ndarray
    U: np.ndarray
    identity_residual: float
    self_financing_residual: float
    band_violation: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def admissible(self) -> bool:
        return self.band_violation <= 0.0

    @property
    def identity_ok(self) -> bool:
        return self.identity_residual <= 4.0

    def summary(self) -> dict:
        return {
            "admissible": self.admissible,
            "band_violation": self.band_violation,
            "pi_S_minus_X_in_eps_units": self.identity_residual,
            "self_financing_residual": self.self_financing_residual,
            "max_L": float(np.max(self.L)),
            "min_U": float(np.min(self.U)),
            "k_final": float(self.solution.k[-1]),
        }


def investment_scenario(params: InvestmentParams, n: int = 200, q: float = 1.0, N: int = 2000,
                        seed: int = 0, tol: float = 1e-10, workers: int = 1) -> InvestmentResult:
    if params.h is None:
        raise InvalidArgument("investment scenario needs a constraint function h")
    if not params.h.concave:
        raise InvalidArgument(f"h={params.h.name!r} is not concave")
    cfg = SimulationConfig(
        x0=X0Sampler("constant", value=params.x0), terms=params.terms(), h=params.h,
        lower=params.lower, upper=params.upper, n=n, q=q, N=N, seed=seed, tol=tol,
        workers=workers, store_paths=True,
    )
    sol = euler_mean_reflected(cfg)
    grid = sol.grid
    T = len(grid)
    particles = cfg.particles()

    # stock price and reserve driven by the same increments as the scheme
    S = np.empty((T, N))
    S[0] = params.s0
    gains = np.zeros(N)  # int pi dS + J
    V = np.empty((T, N))
    V[0] = params.x0
    for j in range(T - 1):
        st = _term_increments(cfg, grid, particles, j)
        dW, dt = st.dM[0], st.dV[0]
        dS = S[j] * (params.b * dt + params.sigma * dW)
        S[j + 1] = S[j] + dS
        pi_j = sol.X[j] / S[j]
        dJ = st.dM[1] + st.dV[1] if len(st.dM) > 1 else 0.0
        gains = gains + pi_j * dS + dJ
        V[j + 1] = params.x0 + gains
    pi = sol.X / S
    wealth = -sol.k[:, None] + pi * S
    scale = np.maximum(np.abs(sol.X), np.finfo(float).tiny)
    identity_residual = float(np.max(np.abs(pi * S - sol.X) / (EPS * scale)))
    sf = float(np.max(np.abs(wealth - V)) / max(1.0, float(np.max(np.abs(V)))))

    L = np.zeros(T)
    U = np.zeros(T)
    lo = None if sol.l is None else sol.l
    up = None if sol.u is None else sol.u
    for j in range(T):
        ens = Ensemble(sol.X[j], workers)
        t = float(grid.points[j])
        L[j] = -np.inf if lo is None else H_inverse(params.h, t, float(lo[j]), ens, tol) - ens.mean
        U[j] = np.inf if up is None else H_inverse(params.h, t, float(up[j]), ens, tol) - ens.mean
    slack = 2 * tol
    viol = 0.0
    if lo is not None:
        viol = max(viol, float(np.max(lo - slack - sol.eh)))
    if up is not None:
        viol = max(viol, float(np.max(sol.eh - up - slack)))
    return InvestmentResult(sol, S, pi, wealth, L, U, identity_residual, sf, viol,
                            {"terms": [t.to_dict() for t in cfg.terms]})
