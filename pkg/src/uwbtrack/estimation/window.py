"""Fixed-lag factor-graph smoother over target states.

The window holds the most recent ``window_size`` target nodes. Older nodes are
folded into a Gaussian prior on their successor by a Schur complement of the
linearized system, so the windowed MAP matches the full-history MAP on
linear-Gaussian problems.

``WindowBatch`` advances many independent windows in lockstep (one per
Monte-Carlo run) so the per-step numpy work is shared; every run keeps its own
damping and stopping state, and its result does not depend on which other runs
share the batch. ``FactorGraphWindow`` is the single-run interface.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, lapack

from ..core import SimConfig, make_transition_matrices
from ..sensing import BearingMeasurement, RangeMeasurement, angles_to_unit
from .factors import (
    Factor,
    GaussianBelief,
    bearing_angle_kernel,
    bearing_kernel,
    cauchy_loss,
    cauchy_weight,
    range_kernel,
)

log = logging.getLogger(__name__)

MAX_ITERS = 25
STEP_TOL = 1e-8
LM_INIT = 1e-4
SINGULAR_JITTER = 1e-9
KD = 11  # upper bandwidth of a block-tridiagonal matrix with 6x6 blocks
_EYE3 = np.eye(3)

# per-node measurement arrays; absent measurements carry zero information
_MEAS_SHAPES = {
    "p_R": (3,), "R": (3, 3), "z_r": (), "w_r": (), "z_b": (3,), "W_b": (2, 2),
    "z_bw": (3,), "z_p": (3,), "W_p": (3, 3),
}


@dataclass
class _Linearization:
    cost: np.ndarray
    grad: np.ndarray | None = None
    hess: np.ndarray | None = None
    newton: np.ndarray | None = None


@dataclass
class WindowEstimate:
    """Optimized means ``(B, n, 6)`` with covariances and a degraded flag per run.

    ``covs`` is ``(B, 6, 6)`` for the newest node or ``(B, n, 6, 6)`` for all.
    """

    means: np.ndarray
    covs: np.ndarray
    degraded: np.ndarray


class WindowBatch:
    """``batch`` independent sliding windows sharing push times and window length."""

    def __init__(self, cfg: SimConfig, batch: int, robust: bool = True):
        self.cfg = cfg
        self.batch = int(batch)
        self.robust = robust
        self.A, _ = make_transition_matrices(cfg.dt)
        self.Q_info = np.linalg.inv(cfg.process_cov)
        self.window_size = cfg.window_size
        self.c = cfg.cauchy_c
        self.means = np.zeros((self.batch, 0, 6))
        self.steps: list[int] = []
        self.meas = {k: np.zeros((self.batch, 0) + s) for k, s in _MEAS_SHAPES.items()}
        self.prior_mean: np.ndarray | None = None
        self.prior_info: np.ndarray | None = None
        self.retired: list[tuple[int, np.ndarray]] = []
        self.dropped_bearings = np.zeros(self.batch, dtype=int)
        self.last_iterations = np.zeros(self.batch, dtype=int)
        self._isotropic = True
        self._has_position = False
        self._band_cache: dict[int, tuple] = {}
        self._next_step = 0

    def __len__(self) -> int:
        return len(self.steps)

    def set_prior(self, mean: np.ndarray, info: np.ndarray) -> None:
        """Gaussian prior ``(B, 6)`` / ``(B, 6, 6)`` on the first node; only before any push."""
        if self.steps:
            raise ValueError("prior can only be set on an empty window")
        self.prior_mean = np.array(mean, float).reshape(self.batch, 6)
        self.prior_info = np.array(info, float).reshape(self.batch, 6, 6)

    # building

    def push(self, p_R, R, z_r=None, w_r=None, z_b=None, W_b=None, z_p=None, W_p=None,
             step: int | None = None) -> None:
        """Append one node per run with its measurements.

        Missing measurements are NaN rows (``z_r``, ``z_b``) or omitted
        arguments. ``z_b`` is a unit bearing in the sensor frame with
        information ``W_b``; bearings antipodal to the predicted one are dropped.
        """
        if self.prior_mean is None:
            raise ValueError("set a prior before the first push")
        B = self.batch
        step = self._next_step if step is None else int(step)
        self._next_step = step + 1
        guess = self.prior_mean.copy() if not self.steps else self.means[:, -1] @ self.A.T
        p_R = np.asarray(p_R, float).reshape(B, 3)
        R = np.asarray(R, float).reshape(B, 3, 3)
        new = {k: np.zeros((B,) + s) for k, s in _MEAS_SHAPES.items()}
        new["p_R"], new["R"] = p_R, R
        new["z_r"][:] = 1.0
        new["z_b"][:] = (1.0, 0.0, 0.0)
        if z_r is not None:
            z_r = np.asarray(z_r, float).reshape(B)
            ok = np.isfinite(z_r)
            new["z_r"][ok] = z_r[ok]
            new["w_r"][ok] = np.broadcast_to(np.asarray(w_r, float), (B,))[ok]
        if z_b is not None:
            z_b = np.asarray(z_b, float).reshape(B, 3)
            W = np.broadcast_to(np.asarray(W_b, float), (B, 2, 2))
            q = (R @ (guess[:, :3] - p_R)[:, :, None])[:, :, 0]
            cr = np.cross(q, z_b)
            # the log map needs a nonzero predicted bearing that is not antipodal to z
            usable = (np.linalg.norm(cr, axis=1) > 1e-9 * np.linalg.norm(q, axis=1)) | (
                np.sum(q * z_b, axis=1) > 0.0)
            present = np.all(np.isfinite(z_b), axis=1)
            ok = present & usable
            dropped = present & ~usable
            if dropped.any():
                self.dropped_bearings += dropped
                log.debug("dropping %d degenerate bearings at step %d", int(dropped.sum()), step)
            new["z_b"][ok] = z_b[ok]
            new["W_b"][ok] = W[ok]
        new["z_bw"] = (R.transpose(0, 2, 1) @ new["z_b"][:, :, None])[:, :, 0]
        if z_p is not None:
            new["z_p"] = np.asarray(z_p, float).reshape(B, 3)
            new["W_p"] = np.asarray(W_p, float).reshape(B, 3, 3)
            self._has_position = True
        for k in self.meas:
            self.meas[k] = np.concatenate([self.meas[k], new[k][:, None]], axis=1)
        self.steps.append(step)
        self.means = np.concatenate([self.means, guess[:, None]], axis=1)
        W = self.meas["W_b"]
        self._isotropic = bool(np.all(W[..., 0, 1] == 0.0) and np.all(W[..., 1, 0] == 0.0)
                               and np.all(W[..., 0, 0] == W[..., 1, 1]))
        while len(self.steps) > self.window_size:
            self._marginalize_oldest()

    def _marginalize_oldest(self) -> None:
        X = self.means
        x0, x1 = X[:, 0], X[:, 1]
        A, Qi = self.A, self.Q_info
        r_dyn = x1 - x0 @ A.T
        H00 = self.prior_info + A.T @ Qi @ A
        g0 = (self.prior_info @ (x0 - self.prior_mean)[:, :, None])[:, :, 0] - r_dyn @ Qi @ A
        first = {k: v[:, :1] for k, v in self.meas.items()}
        Hm, gm, _, _ = self._measurement_blocks(X[:, :1], first, self.robust)
        H00[:, :3, :3] += Hm[:, 0]
        g0[:, :3] += gm[:, 0]
        H01 = -A.T @ Qi
        g1 = r_dyn @ Qi
        rhs = np.concatenate([np.broadcast_to(H01, (self.batch, 6, 6)), g0[:, :, None]], axis=2)
        K = np.linalg.solve(H00, rhs)
        info = Qi - H01.T @ K[:, :, :6]
        info = 0.5 * (info + info.transpose(0, 2, 1))
        grad = g1 - (H01.T @ K[:, :, 6:])[:, :, 0]
        self.prior_mean = x1 - np.linalg.solve(info, grad[:, :, None])[:, :, 0]
        self.prior_info = info
        self.retired.append((self.steps.pop(0), x0.copy()))
        for k in self.meas:
            self.meas[k] = self.meas[k][:, 1:]
        self.means = X[:, 1:].copy()

    # objective

    def _measurement_blocks(self, X, meas, robust, system=True):
        """Per-node 3x3 Hessian and gradient position blocks plus the measurement cost.

        Shapes are ``(m, k, ...)`` for ``m`` runs of ``k`` nodes. With
        ``system`` the curvature Gauss-Newton leaves out (residual curvature of
        range and, when isotropic, bearing terms plus the robust loss second
        derivative) is returned as a fourth item; it only shapes Newton steps,
        never covariances.
        """
        m, k = X.shape[:2]
        P = X[:, :, :3].reshape(-1, 3)
        flat = {key: v.reshape((m * k,) + v.shape[2:]) for key, v in meas.items()}
        r_r, J_r, valid_r = range_kernel(P, flat["p_R"], flat["z_r"])
        w_r = flat["w_r"] * valid_r
        if self._isotropic:
            theta2, grad_b, gn_b, hess_b, valid_b = bearing_angle_kernel(P, flat["p_R"], flat["z_bw"], jac=system)
            w_b = flat["W_b"][:, 0, 0]
            s = w_b * theta2
        else:
            r_b, J_b, _, valid_b = bearing_kernel(P, flat["p_R"], flat["R"], flat["z_b"], jac=system)
            W = flat["W_b"]
            Wr = (W @ r_b[:, :, None])[:, :, 0]
            s = np.sum(r_b * Wr, axis=1)
        if robust:
            wt = cauchy_weight(s, self.c) * valid_b
            b_cost = cauchy_loss(s, self.c) * valid_b
        else:
            wt = valid_b.astype(float)
            b_cost = s * valid_b
        cost_terms = w_r * r_r * r_r + b_cost
        if self._has_position:
            r_p = flat["z_p"] - P
            Wr_p = (flat["W_p"] @ r_p[:, :, None])[:, :, 0]
            cost_terms = cost_terms + np.sum(r_p * Wr_p, axis=1)
        cost = cost_terms.reshape(m, k).sum(axis=1)
        if not system:
            return None, None, cost, None

        JJ_r = J_r[:, :, None] * J_r[:, None, :]
        H = w_r[:, None, None] * JJ_r
        g = (w_r * r_r)[:, None] * J_r
        # range residual curvature: d2|p - p_R| = (I - n n') / d with n = -J
        d = np.maximum(flat["z_r"] - r_r, 1e-9)
        corr = (-w_r * r_r / d)[:, None, None] * (_EYE3 - JJ_r)
        if self._isotropic:
            ww = wt * w_b
            JtWr = w_b[:, None] * grad_b
            H += ww[:, None, None] * gn_b
            corr += ww[:, None, None] * (hess_b - gn_b)
        else:
            Jt = J_b.transpose(0, 2, 1)
            JtWr = (Jt @ Wr[:, :, None])[:, :, 0]
            H += wt[:, None, None] * (Jt @ W @ J_b)
        g += wt[:, None] * JtWr
        if robust:
            # second-order term of the loss, d2rho/ds2 = -w^2 / c^2
            rho2 = -2.0 * wt * wt / (self.c * self.c)
            corr += rho2[:, None, None] * JtWr[:, :, None] * JtWr[:, None, :]
        if self._has_position:
            H += flat["W_p"]
            g -= Wr_p
        return H.reshape(m, k, 3, 3), g.reshape(m, k, 3), cost, corr.reshape(m, k, 3, 3)

    # the information matrix is block tridiagonal with 6x6 blocks, so it is
    # kept in LAPACK upper band storage: ab[KD + i - j, j] = H[i, j], i <= j

    def _band_index(self, n: int):
        """Flat band positions of the prior block, each node's position block, and the dynamics band."""
        cached = self._band_cache.get(n)
        if cached is None:
            N = 6 * n
            a6, b6 = np.triu_indices(6)
            a3, b3 = np.triu_indices(3)
            prior = (KD + a6 - b6) * N + b6
            pos = ((KD + a3 - b3)[None, :] * N + (6 * np.arange(n))[:, None] + b3[None, :]).ravel()
            struct = _to_band(dynamics_information(self.A, self.Q_info, n))
            cached = (prior, (a6, b6), pos, (a3, b3), struct)
            self._band_cache[n] = cached
        return cached

    def _evaluate(self, X, runs=None, robust=None, system=True) -> _Linearization:
        """Cost (and banded system) for runs ``runs`` (all when None) at means ``X``."""
        robust = self.robust if robust is None else robust
        sel = slice(None) if runs is None else runs
        meas = self.meas if runs is None else {k: v[runs] for k, v in self.meas.items()}
        prior_mean, prior_info = self.prior_mean[sel], self.prior_info[sel]
        m, n = X.shape[:2]
        r_dyn = X[:, 1:] - X[:, :-1] @ self.A.T
        Qr = r_dyn @ self.Q_info
        dp = X[:, 0] - prior_mean
        Pdp = (prior_info @ dp[:, :, None])[:, :, 0]
        Hm, gm, mcost, corr = self._measurement_blocks(X, meas, robust, system=system)
        cost = np.sum(r_dyn * Qr, axis=(1, 2)) + np.sum(dp * Pdp, axis=1) + mcost
        if not system:
            return _Linearization(cost)
        g = np.zeros((m, n, 6))
        g[:, 1:] += Qr
        g[:, :-1] -= Qr @ self.A
        g[:, 0] += Pdp
        g[:, :, :3] += gm
        prior, (a6, b6), pos, (a3, b3), struct = self._band_index(n)
        H = np.empty((m,) + struct.shape)
        H[:] = struct
        Hf = H.reshape(m, -1)
        Hf[:, prior] += prior_info[:, a6, b6]
        Hf[:, pos] += Hm[:, :, a3, b3].reshape(m, -1)
        newton = H.copy()
        newton.reshape(m, -1)[:, pos] += corr[:, :, a3, b3].reshape(m, -1)
        return _Linearization(cost, g.reshape(m, -1), H, newton)

    def cost(self, X=None, robust=None) -> np.ndarray:
        """MAP objective per run (sum of squared whitened residuals and robust terms)."""
        X = self.means if X is None else np.asarray(X, float).reshape(self.means.shape)
        return self._evaluate(X, robust=robust, system=False).cost

    def information_matrix(self, robust=None) -> np.ndarray:
        """Dense Gauss-Newton (IRLS) information matrices ``(B, 6n, 6n)`` at the current means."""
        lin = self._evaluate(self.means, robust=robust)
        return np.stack([_from_band(h) for h in lin.hess])

    # solving

    def optimize(self, robust: bool | None = None, marginals: str = "last") -> WindowEstimate:
        """Levenberg-damped Newton/Gauss-Newton with IRLS weights, run by run.

        Each run stops once its step norm drops below ``STEP_TOL`` or after
        ``MAX_ITERS`` iterations. Steps use the full Newton curvature when it
        is positive definite and the Gauss-Newton/IRLS curvature otherwise;
        covariances always come from the Gauss-Newton/IRLS information.
        """
        if not self.steps:
            raise ValueError("window is empty")
        if marginals not in ("last", "all"):
            raise ValueError("marginals must be 'last' or 'all'")
        robust = self.robust if robust is None else robust
        B, n = self.batch, len(self.steps)
        X = self.means.copy()
        lin = self._evaluate(X, robust=robust)
        lam = np.full(B, LM_INIT)
        active = np.ones(B, dtype=bool)
        iters = np.zeros(B, dtype=int)
        for it in range(1, MAX_ITERS + 1):
            runs = np.flatnonzero(active)
            if runs.size == 0:
                break
            iters[runs] = it
            delta = np.zeros((runs.size, 6 * n))
            solved = np.zeros(runs.size, dtype=bool)
            for i, b in enumerate(runs):
                # Newton curvature first, Gauss-Newton/IRLS curvature if indefinite
                for H in (lin.newton[b], lin.hess[b]):
                    Hd = H.copy()
                    Hd[KD] *= 1.0 + lam[b]
                    chol, info = lapack.dpbtrf(Hd, overwrite_ab=1)
                    if info == 0:
                        delta[i] = -lapack.dpbtrs(chol, lin.grad[b])[0]
                        solved[i] = True
                        break
            lam[runs[~solved]] *= 10.0
            runs, delta = runs[solved], delta[solved]
            if runs.size == 0:
                continue
            step_norm = np.linalg.norm(delta, axis=1)
            converged = step_norm < STEP_TOL
            X_new = X[runs] + delta.reshape(-1, n, 6)
            # rejections are rare, so linearize the trial point right away
            trial = self._evaluate(X_new, runs, robust=robust)
            old = lin.cost[runs]
            # rounding slack so converged iterates are not rejected on noise
            accept = trial.cost <= old + 1e-12 * np.abs(old)
            acc = runs[accept]
            X[acc] = X_new[accept]
            lam[acc] = np.maximum(lam[acc] / 10.0, 1e-12)
            # a final sub-tolerance step keeps the current linearization
            keep = accept & ~converged
            for field in ("cost", "grad", "hess", "newton"):
                getattr(lin, field)[runs[keep]] = getattr(trial, field)[keep]
            rej = runs[~accept]
            lam[rej] *= 10.0
            done = (accept & converged) | (~accept & (converged | (lam[runs] > 1e12)))
            active[runs[done]] = False
        self.last_iterations = iters
        self.means = X
        return self._marginals(lin.hess, marginals)

    def _marginals(self, hess: np.ndarray, marginals: str) -> WindowEstimate:
        B, n = self.batch, len(self.steps)
        N = 6 * n
        degraded = np.zeros(B, dtype=bool)
        covs = np.zeros((B, 6, 6)) if marginals == "last" else np.zeros((B, n, 6, 6))
        E = np.zeros((N, 6))
        E[-6:] = np.eye(6)
        for b in range(B):
            chol, info = lapack.dpbtrf(hess[b])
            if info != 0:
                degraded[b] = True
                Hj = hess[b].copy()
                Hj[KD] += SINGULAR_JITTER
                chol, info = lapack.dpbtrf(Hj)
                if info != 0:
                    raise LinAlgError("window information matrix is not positive definite")
            if marginals == "last":
                cov = lapack.dpbtrs(chol, E)[0][-6:]
                covs[b] = 0.5 * (cov + cov.T)
            else:
                full = lapack.dpbtrs(chol, np.eye(N))[0]
                for k in range(n):
                    blk = full[6 * k:6 * k + 6, 6 * k:6 * k + 6]
                    covs[b, k] = 0.5 * (blk + blk.T)
        return WindowEstimate(self.means.copy(), covs, degraded)

    def smoothed_trajectory(self) -> list[tuple[int, np.ndarray]]:
        """Retired node estimates followed by the current window means, ``(step, (B, 6))``."""
        return list(self.retired) + [(s, self.means[:, k].copy()) for k, s in enumerate(self.steps)]


class FactorGraphWindow:
    """Sliding window of target nodes with prior, dynamics and measurement factors.

    Parameters
    ----------
    cfg : SimConfig
        Supplies ``dt``, the process covariance, ``cauchy_c`` and ``window_size``.
    robust : bool
        Default loss for bearing factors (Cauchy when True, quadratic otherwise).
    prior : tuple of (mean, cov), optional
        Explicit prior on the first node. Without it, the first push builds the
        prior from its own measurements and attaches no measurement factors.
    """

    def __init__(self, cfg: SimConfig, robust: bool = True, prior=None):
        self.cfg = cfg
        self.core = WindowBatch(cfg, 1, robust)
        if prior is not None:
            mean, cov = prior
            self.core.set_prior(np.asarray(mean, float)[None], np.linalg.inv(np.asarray(cov, float))[None])

    def __len__(self) -> int:
        return len(self.core)

    @property
    def robust(self) -> bool:
        return self.core.robust

    @property
    def A(self) -> np.ndarray:
        return self.core.A

    @property
    def window_size(self) -> int:
        return self.core.window_size

    @property
    def means(self) -> np.ndarray:
        return self.core.means[0]

    @means.setter
    def means(self, value) -> None:
        self.core.means[0] = np.asarray(value, float)

    @property
    def prior_mean(self) -> np.ndarray:
        return self.core.prior_mean[0]

    @property
    def prior_info(self) -> np.ndarray:
        return self.core.prior_info[0]

    @property
    def steps(self) -> list[int]:
        return list(self.core.steps)

    @property
    def retired(self) -> list[tuple[int, np.ndarray]]:
        return [(s, x[0]) for s, x in self.core.retired]

    @property
    def dropped_bearings(self) -> int:
        return int(self.core.dropped_bearings[0])

    @property
    def last_iterations(self) -> int:
        return int(self.core.last_iterations[0])

    @property
    def factors(self) -> list[Factor]:
        """Explicit factor list of the current window (node indices are window-local)."""
        core, M = self.core, {k: v[0] for k, v in self.core.meas.items()}
        out = [Factor("prior", (0,), self.prior_mean.copy(), self.prior_info.copy())]
        for k in range(len(core) - 1):
            out.append(Factor("dynamics", (k, k + 1), None, core.Q_info.copy()))
        for k in range(len(core)):
            pose = (M["p_R"][k].copy(), M["R"][k].copy())
            if M["w_r"][k] > 0:
                out.append(Factor("range", (k,), float(M["z_r"][k]), np.array([[M["w_r"][k]]]), pose=pose))
            if np.any(M["W_b"][k] != 0):
                out.append(Factor("bearing", (k,), M["z_b"][k].copy(), M["W_b"][k].copy(),
                                  robust=self.robust, pose=pose))
            if np.any(M["W_p"][k] != 0):
                out.append(Factor("position", (k,), M["z_p"][k].copy(), M["W_p"][k].copy()))
        return out

    def push(self, pose, z_r: RangeMeasurement | None, z_b: BearingMeasurement | None,
             position_fix=None, step: int | None = None) -> None:
        """Append a node predicted from the newest mean, with its measurement factors."""
        from .ekf import initialize_belief

        core = self.core
        p_R = np.asarray(pose.position, float)[None]
        R = np.asarray(pose.rotation, float)[None]
        if core.prior_mean is None:
            belief = initialize_belief(pose, z_r, z_b, self.cfg)
            core.set_prior(belief.mean[None], np.linalg.inv(belief.cov)[None])
            core.push(p_R, R, step=step)
            return
        kw = {}
        if z_r is not None:
            kw.update(z_r=[z_r.z_r], w_r=1.0 / z_r.sigma_r**2)
        if z_b is not None:
            kw.update(z_b=angles_to_unit(z_b)[None], W_b=np.linalg.inv(np.asarray(z_b.cov, float))[None])
        if position_fix is not None:
            z_p, cov_p = position_fix
            kw.update(z_p=np.asarray(z_p, float)[None], W_p=np.linalg.inv(np.asarray(cov_p, float))[None])
        core.push(p_R, R, step=step, **kw)

    def cost(self, X=None, robust=None) -> float:
        X = None if X is None else np.asarray(X, float)[None]
        return float(self.core.cost(X, robust)[0])

    def information_matrix(self, robust=None) -> np.ndarray:
        return self.core.information_matrix(robust)[0]

    def optimize(self, robust: bool | None = None, marginals: str = "all") -> list[GaussianBelief]:
        """Optimize the window; beliefs per node (covariance None unless requested).

        ``marginals`` selects which covariances to extract: ``"all"`` nodes or
        only the ``"last"`` one.
        """
        est = self.core.optimize(robust, marginals)
        n = len(self.core)
        degraded = bool(est.degraded[0])
        if marginals == "last":
            covs = [None] * (n - 1) + [est.covs[0]]
        else:
            covs = list(est.covs[0])
        return [GaussianBelief(est.means[0, k].copy(), covs[k], degraded) for k in range(n)]

    def smoothed_trajectory(self) -> list[tuple[int, np.ndarray]]:
        """Retired node estimates followed by the current window means."""
        return [(s, x[0]) for s, x in self.core.smoothed_trajectory()]


def dynamics_information(A: np.ndarray, Q_info: np.ndarray, n: int) -> np.ndarray:
    """Dense information of the ``n - 1`` dynamics factors of an ``n``-node chain."""
    H = np.zeros((6 * n, 6 * n))
    AtQA, AtQ = A.T @ Q_info @ A, A.T @ Q_info
    for k in range(n - 1):
        a, b = slice(6 * k, 6 * k + 6), slice(6 * k + 6, 6 * k + 12)
        H[a, a] += AtQA
        H[a, b] -= AtQ
        H[b, a] -= AtQ.T
        H[b, b] += Q_info
    return H


def _to_band(H: np.ndarray) -> np.ndarray:
    N = H.shape[0]
    ab = np.zeros((KD + 1, N))
    for off in range(KD + 1):
        ab[KD - off, off:] = np.diagonal(H, off)
    return ab


def _from_band(ab: np.ndarray) -> np.ndarray:
    N = ab.shape[1]
    H = np.zeros((N, N))
    for off in range(KD + 1):
        idx = np.arange(N - off)
        H[idx, idx + off] = ab[KD - off, off:]
        H[idx + off, idx] = ab[KD - off, off:]
    return H


def push_timestep(window: FactorGraphWindow, pose, z_r, z_b, position_fix=None) -> None:
    window.push(pose, z_r, z_b, position_fix=position_fix)


def optimize(window: FactorGraphWindow, robust: bool | None = None) -> list[GaussianBelief]:
    return window.optimize(robust)
