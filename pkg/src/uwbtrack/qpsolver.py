"""Dense dual active-set QP solver for tiny problems.

Solves ``min 1/2 x'Px + q'x  s.t.  Gx <= h`` with the Goldfarb-Idnani dual
method: start at the unconstrained minimum and add the most violated row
while keeping the multipliers non-negative. An inconsistent row yields a
Farkas certificate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_ITER = 200
FEAS_TOL = 1e-10
_DEP_TOL = 1e-10


@dataclass
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    G: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.P = np.atleast_2d(np.asarray(self.P, float))
        self.q = np.asarray(self.q, float).reshape(-1)
        n = self.q.size
        self.G = np.asarray(self.G, float).reshape(-1, n)
        self.h = np.asarray(self.h, float).reshape(-1)
        if self.P.shape != (n, n):
            raise ValueError("P and q sizes disagree")
        if self.G.shape[0] != self.h.size:
            raise ValueError("G and h row counts disagree")
        if np.max(np.abs(self.P - self.P.T)) > 1e-12:
            raise ValueError("P must be symmetric")
        if np.linalg.eigvalsh(self.P)[0] < 1e-9:
            raise ValueError("P must be positive definite")

    def objective(self, x) -> float:
        x = np.asarray(x, float)
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    duals: np.ndarray
    status: str
    active: list[int] = field(default_factory=list)
    iterations: int = 0
    certificate: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def kkt_residuals(p: QpProblem, x, duals) -> dict[str, float]:
    """Stationarity, primal infeasibility, dual sign and complementarity errors."""
    x = np.asarray(x, float)
    lam = np.asarray(duals, float)
    slack = p.G @ x - p.h
    return {
        "stationarity": float(np.max(np.abs(p.P @ x + p.q + p.G.T @ lam), initial=0.0)),
        "primal": float(max(np.max(slack, initial=-np.inf), 0.0)),
        "dual": float(max(-np.min(lam, initial=0.0), 0.0)),
        "complementarity": float(np.max(np.abs(lam * slack), initial=0.0)),
    }


def _equality_solve(P, q, N, b):
    """Minimize over {x : N'x = b}; returns x and multipliers u with Px+q = N u."""
    n, k = N.shape
    K = np.zeros((n + k, n + k))
    K[:n, :n] = P
    K[:n, n:] = -N
    K[n:, :n] = N.T
    rhs = np.concatenate([-q, b])
    sol = np.linalg.solve(K, rhs)
    # one refinement pass; near-dependent active rows carry large multipliers,
    # so small primal residuals would otherwise show up in complementarity
    sol += np.linalg.solve(K, rhs - K @ sol)
    return sol[:n], sol[n:]


def solve(p: QpProblem, warm_start: list[int] | None = None, max_iter: int = MAX_ITER) -> QpSolution:
    """Solve ``p``; ``warm_start`` is an optional guess of the active rows."""
    P, q, G, h = p.P, p.q, p.G, p.h
    n, m = q.size, h.size
    Pinv = np.linalg.inv(P)
    # rows as n_i'x >= b_i
    Nall = -G.T
    ball = -h
    scale = np.maximum(np.linalg.norm(G, axis=1), 1e-300)

    active: list[int] = []
    u = np.zeros(0)
    x = -Pinv @ q
    if warm_start:
        cand = sorted(set(int(i) for i in warm_start))
        try:
            if np.linalg.matrix_rank(Nall[:, cand]) == len(cand) and len(cand) <= n:
                xw, uw = _equality_solve(P, q, Nall[:, cand], ball[cand])
                if np.all(uw >= 0):
                    x, u, active = xw, uw, cand
        except np.linalg.LinAlgError:
            pass

    it = 0
    while True:
        s = (Nall.T @ x - ball) / scale
        s[active] = 0.0
        viol = int(np.argmin(s)) if m else -1
        if m == 0 or s[viol] >= -FEAS_TOL * max(1.0, abs(ball[viol]) / scale[viol]):
            return _finish(p, x, u, active, it)
        np_ = Nall[:, viol]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                return QpSolution(x, _full_duals(m, active, u), "max_iter", list(active), it)
            if active:
                N = Nall[:, active]
                M = N.T @ Pinv @ N
                Nstar = np.linalg.solve(M, N.T @ Pinv)
                r = Nstar @ np_
                z = Pinv @ (np_ - N @ r)
            else:
                r = np.zeros(0)
                z = Pinv @ np_
            # partial (dual) step length
            t1, k_drop = np.inf, -1
            for j, rj in enumerate(r):
                if rj > _DEP_TOL:
                    tj = u[j] / rj
                    if tj < t1:
                        t1, k_drop = tj, j
            zn = float(z @ np_)
            # a full active set spans R^n, so the new row is dependent whatever rounding says
            dependent = len(active) >= n or (
                float(np.linalg.norm(z)) <= _DEP_TOL * float(np.linalg.norm(Pinv @ np_)))
            t2 = np.inf if dependent or zn <= 0 else (ball[viol] - np_ @ x) / zn
            if not np.isfinite(t1) and not np.isfinite(t2):
                cert = np.zeros(m)
                cert[viol] = 1.0
                for j, idx in enumerate(active):
                    cert[idx] = max(-r[j], 0.0)
                return QpSolution(x, _full_duals(m, active, u), "infeasible", list(active), it, cert)
            if not np.isfinite(t2):
                u = u - t1 * r
                u_p += t1
                active.pop(k_drop)
                u = np.delete(u, k_drop)
                continue
            t = min(t1, t2)
            x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(viol)
                u = np.append(u, u_p)
                break
            active.pop(k_drop)
            u = np.delete(u, k_drop)


def _full_duals(m: int, active: list[int], u: np.ndarray) -> np.ndarray:
    lam = np.zeros(m)
    if active:
        lam[active] = np.maximum(u, 0.0)
    return lam


def _finish(p: QpProblem, x, u, active, it) -> QpSolution:
    # re-solve on the final active set to remove accumulated rounding
    if active:
        try:
            xs, us = _equality_solve(p.P, p.q, -p.G.T[:, active], -p.h[active])
            if np.all(us >= -1e-9) and np.all(p.G @ xs - p.h <= 1e-9):
                x, u = xs, us
        except np.linalg.LinAlgError:
            pass
    else:
        x = np.linalg.solve(p.P, -p.q)
    return QpSolution(np.asarray(x, float), _full_duals(p.h.size, active, np.asarray(u)), "optimal", list(active), it)
