"""Dense primal-dual interior-point solver for block semidefinite programs.

Problems are posed in the maximization form::

    maximize    sum_j <C_j, X_j> + c . u
    subject to  sum_j <A_ij, X_j> + (B u)_i = b_i,   X_j >= 0 (PSD), u free

with dual::

    minimize    b . y
    subject to  S_j = sum_i y_i A_ij - C_j >= 0,   B^T y = c.

The free variables ``u`` are optional.  The iteration is an infeasible-start
path-following method using the Nesterov-Todd scaling and Mehrotra's
predictor-corrector; free variables enter through a bordered Schur system.
Infeasibility is flagged when the iterates converge to a Farkas-type ray
instead of an optimum.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

# "primal_infeasible": a ray proves no X satisfies the constraints (the dual
# objective is unbounded below).  "dual_unbounded": a ray proves the dual has
# no feasible point (the primal objective is unbounded above).
STATUSES = ("optimal", "primal_infeasible", "dual_unbounded", "max_iter")


@dataclass
class SdpProblem:
    """Block SDP in maximization standard form.

    Parameters
    ----------
    blocks : list of int
        Dimension of each PSD block.
    objective : list of ndarray
        Symmetric objective matrix per block.
    constraints : list of dict
        One ``{block_index: symmetric matrix}`` mapping per equality
        constraint; absent blocks have zero coefficient.
    rhs : ndarray
        Right-hand sides ``b_i``.
    free : ndarray, optional
        Coefficients ``B`` of free variables, shape ``(n_constraints, f)``.
    free_objective : ndarray, optional
        Objective coefficients ``c`` of the free variables.
    """

    blocks: list[int]
    objective: list[np.ndarray]
    constraints: list[dict[int, np.ndarray]]
    rhs: np.ndarray
    free: np.ndarray | None = None
    free_objective: np.ndarray | None = None
    _stacks: list | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float)
        m = len(self.constraints)
        self.free = np.zeros((m, 0)) if self.free is None else np.asarray(self.free, float).reshape(m, -1)
        f = self.free.shape[1]
        self.free_objective = np.zeros(f) if self.free_objective is None else np.asarray(self.free_objective, float)
        self.validate()

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def n_free(self) -> int:
        return self.free.shape[1]

    def validate(self):
        if len(self.objective) != len(self.blocks):
            raise ValueError("one objective matrix per block required")
        if len(self.rhs) != len(self.constraints):
            raise ValueError("one right-hand side per constraint required")
        if self.free_objective.shape != (self.n_free,):
            raise ValueError("one objective coefficient per free variable required")
        for C, n in zip(self.objective, self.blocks):
            if C.shape != (n, n) or not np.allclose(C, C.T, atol=1e-14, rtol=0):
                raise ValueError("objective matrices must be symmetric and sized to their block")
        for con in self.constraints:
            for j, A in con.items():
                if A.shape != (self.blocks[j], self.blocks[j]):
                    raise ValueError("constraint matrix does not match its block")
                if not np.allclose(A, A.T, atol=1e-14, rtol=0):
                    raise ValueError("constraint matrices must be symmetric")

    def with_data(self, rhs=None, free_objective=None) -> "SdpProblem":
        """Copy with new right-hand sides or free objective, sharing coefficients."""
        q = SdpProblem.__new__(SdpProblem)
        q.__dict__.update(self.__dict__)
        if rhs is not None:
            q.rhs = np.asarray(rhs, dtype=float)
        if free_objective is not None:
            q.free_objective = np.asarray(free_objective, dtype=float)
        q._stacks = self.stacks()
        q.validate_shapes()
        return q

    def validate_shapes(self):
        if self.rhs.shape != (self.n_constraints,) or self.free_objective.shape != (self.n_free,):
            raise ValueError("data vectors do not match the problem dimensions")

    def stacks(self):
        """Per block: (constraint indices, stacked coefficient matrices)."""
        if self._stacks is None:
            out = []
            for j, n in enumerate(self.blocks):
                idx = [i for i, con in enumerate(self.constraints) if j in con]
                mats = np.array([self.constraints[i][j] for i in idx]).reshape(len(idx), n, n)
                out.append((np.array(idx, dtype=np.int64), mats))
            self._stacks = out
        return self._stacks

    def apply(self, X: list[np.ndarray]) -> np.ndarray:
        """``A(X)_i = sum_j <A_ij, X_j>``."""
        out = np.zeros(self.n_constraints)
        for (idx, mats), Xj in zip(self.stacks(), X):
            if len(idx):
                out[idx] += mats.reshape(len(idx), -1) @ Xj.ravel()
        return out

    def adjoint(self, y: np.ndarray) -> list[np.ndarray]:
        """``A^T(y)_j = sum_i y_i A_ij``."""
        out = []
        for (idx, mats), n in zip(self.stacks(), self.blocks):
            if len(idx):
                out.append(np.tensordot(y[idx], mats, axes=1))
            else:
                out.append(np.zeros((n, n)))
        return out

    def dual_slack(self, y: np.ndarray) -> list[np.ndarray]:
        return [S - C for S, C in zip(self.adjoint(y), self.objective)]

    def residual(self, X: list[np.ndarray], u=None) -> np.ndarray:
        """``b - A(X) - B u``."""
        r = self.rhs - self.apply(X)
        if self.n_free:
            r -= self.free @ np.asarray(u, float)
        return r

    def objective_value(self, X: list[np.ndarray], u=None) -> float:
        v = float(sum(np.vdot(C, Xj) for C, Xj in zip(self.objective, X)))
        if self.n_free:
            v += float(self.free_objective @ np.asarray(u, float))
        return v

    def scaled(self, s: float) -> "SdpProblem":
        return SdpProblem(list(self.blocks), [s * C for C in self.objective], self.constraints, self.rhs,
                          self.free, s * self.free_objective)

    def to_sdpa(self) -> str:
        """Sparse SDPA text; our problem is the SDPA dual with F0 = C, F_i = A_i.

        Free variables are split into a nonnegative pair held in a trailing
        diagonal (LP) block.
        """
        f = self.n_free
        sizes = [str(n) for n in self.blocks] + ([str(-2 * f)] if f else [])
        lines = [
            f"{self.n_constraints}",
            f"{len(sizes)}",
            " ".join(sizes),
            " ".join(repr(float(v)) for v in self.rhs),
        ]

        def entries(k, j, M):
            iu = np.triu_indices(M.shape[0])
            for r, c in zip(*iu):
                if M[r, c] != 0.0:
                    lines.append(f"{k} {j + 1} {r + 1} {c + 1} {float(M[r, c])!r}")

        lp = len(self.blocks)
        for j, C in enumerate(self.objective):
            entries(0, j, C)
        for t, c in enumerate(self.free_objective):
            entries(0, lp, np.diag(np.r_[np.zeros(2 * t), c, -c, np.zeros(2 * (f - t - 1))]))
        for i, con in enumerate(self.constraints):
            for j in sorted(con):
                entries(i + 1, j, con[j])
            if f:
                entries(i + 1, lp, np.diag(np.ravel(np.column_stack([self.free[i], -self.free[i]]))))
        return "\n".join(lines) + "\n"


@dataclass
class SdpSolution:
    status: str
    primal_value: float
    dual_value: float
    y: np.ndarray
    gap: float
    min_dual_slack_eig: np.ndarray
    iterations: int
    primal_residual: float = np.nan
    dual_residual: float = np.nan
    X: list[np.ndarray] | None = field(default=None, repr=False)
    u: np.ndarray | None = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def _min_eigs(mats: list[np.ndarray]) -> np.ndarray:
    return np.array([sla.eigvalsh(M, subset_by_index=[0, 0])[0] for M in mats])


def _nt_scaling(X, Z):
    """Return G, G^-1 and d with X = G diag(d) G^T and Z = G^-T diag(d) G^-1."""
    L = np.linalg.cholesky(X)
    R = np.linalg.cholesky(Z)
    U, d, Vt = np.linalg.svd(R.T @ L)
    G = (L @ Vt.T) / np.sqrt(d)
    Ginv = (np.sqrt(d)[:, None] * Vt) @ sla.solve_triangular(L, np.eye(len(d)), lower=True)
    return G, Ginv, d


def _max_step(d, dT):
    """Largest a with diag(d) + a*dT PSD (inf if unbounded)."""
    s = 1.0 / np.sqrt(d)
    lam = sla.eigvalsh(s[:, None] * dT * s[None, :], subset_by_index=[0, 0])[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _factor(M):
    m = len(M)
    for jitter in (0.0, 1e-14, 1e-11):
        try:
            f = sla.cho_factor(M + jitter * max(1.0, np.max(np.abs(np.diag(M)))) * np.eye(m), check_finite=False)
            return lambda r: sla.cho_solve(f, r, check_finite=False)
        except np.linalg.LinAlgError:
            continue
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(M, check_finite=False)
    return lambda r: sla.lu_solve(lu, r, check_finite=False)


def solve(
    p: SdpProblem,
    gap_tol: float = 1e-9,
    feas_tol: float = 1e-9,
    max_iter: int = 200,
    infeas_tol: float = 1e-8,
    stall_iter: int = 12,
) -> SdpSolution:
    """Solve ``p`` and return values, multipliers and residuals.

    The returned ``y`` are the dual multipliers of the maximization form;
    ``min_dual_slack_eig`` is evaluated from ``y`` directly so that it can be
    used as an exact feasibility statement for the dual point.  If the
    tolerances are not met, the best iterate seen is returned with status
    ``max_iter``; the iteration also stops early once ``stall_iter``
    consecutive steps fail to improve it.
    """
    stacks = p.stacks()
    m, f = p.n_constraints, p.n_free
    b = p.rhs
    B = p.free
    C = [-c for c in p.objective]  # internal minimization form
    cf = -p.free_objective
    N = sum(p.blocks)
    normb = 1.0 + np.linalg.norm(b)
    normC = 1.0 + np.sqrt(sum(np.sum(c * c) for c in C) + cf @ cf)

    X, Z = [], []
    for (idx, mats), c, n in zip(stacks, C, p.blocks):
        anorm = np.sqrt(np.sum(mats * mats, axis=(1, 2))) if len(idx) else np.zeros(1)
        xi = max(10.0, np.sqrt(n), n * np.max((1 + np.abs(b[idx])) / (1 + anorm)) if len(idx) else 0.0)
        zeta = max(10.0, np.sqrt(n), float(np.max(anorm)), float(np.linalg.norm(c)))
        X.append(xi * np.eye(n))
        Z.append(zeta * np.eye(n))
    y = np.zeros(m)
    u = np.zeros(f)

    best_p = best_d = None
    status = "max_iter"
    it = 0
    for it in range(max_iter + 1):
        ATy = p.adjoint(y)
        rp = b - p.apply(X) - B @ u
        Rd = [c - z - a for c, z, a in zip(C, Z, ATy)]
        rf = cf - B.T @ y
        pobj = float(sum(np.vdot(c, x) for c, x in zip(C, X)) + cf @ u)
        dobj = float(b @ y)
        xz = float(sum(np.vdot(x, z) for x, z in zip(X, Z)))
        mu = xz / N
        pinf = np.linalg.norm(rp) / normb
        dinf = np.sqrt(sum(np.sum(r * r) for r in Rd) + rf @ rf) / normC
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        # the two sides are tracked separately: near a boundary one of them
        # may stop converging while the other is still accurate
        pm, dm = max(relgap, pinf), max(relgap, dinf)
        if best_p is None or pm < best_p[0]:
            best_p = (pm, [x.copy() for x in X], u.copy(), it)
        if best_d is None or dm < best_d[0]:
            best_d = (dm, y.copy(), it)
        log.debug("it %d pobj %.10g dobj %.10g gap %.2e pinf %.2e dinf %.2e", it, pobj, dobj, relgap, pinf, dinf)
        if relgap <= gap_tol and pinf <= feas_tol and dinf <= feas_tol:
            status = "optimal"
            break
        # Farkas rays: A^T y <= 0, B^T y = 0, b.y > 0 proves the primal
        # infeasible; X >= 0 with A(X) + B u = 0 and <C, X> + c.u < 0 proves
        # the dual infeasible (both in the internal minimization form)
        dray = np.sqrt(sum(np.sum((a + z) ** 2) for a, z in zip(ATy, Z)) + np.sum((B.T @ y) ** 2))
        if dobj > 0 and dray <= infeas_tol * dobj:
            status = "primal_infeasible"
            break
        if pobj < 0 and np.linalg.norm(p.apply(X) + B @ u) <= infeas_tol * -pobj:
            status = "dual_unbounded"
            break
        if it == max_iter or it - max(best_p[3], best_d[2]) >= stall_iter:
            break

        try:
            scal = [_nt_scaling(x, z) for x, z in zip(X, Z)]
        except np.linalg.LinAlgError:
            log.debug("scaling failed at iteration %d", it)
            break
        W = [G @ G.T for G, _, _ in scal]

        M = np.zeros((m, m))
        for (idx, mats), w in zip(stacks, W):
            if len(idx):
                WAW = w @ mats @ w
                M[np.ix_(idx, idx)] += mats.reshape(len(idx), -1) @ WAW.reshape(len(idx), -1).T
        M = 0.5 * (M + M.T)
        if f:
            K = np.block([[M, B], [B.T, np.zeros((f, f))]])
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                lu = sla.lu_factor(K, check_finite=False)
        else:
            solveM = _factor(M)

        WRdW = [w @ r @ w for w, r in zip(W, Rd)]
        base_rhs = rp + p.apply(WRdW)

        def direction(Rc):
            r = base_rhs - p.apply(Rc)
            if f:
                rhs = np.concatenate([r, rf])
                with np.errstate(invalid="ignore", over="ignore"):
                    sol = sla.lu_solve(lu, rhs, check_finite=False)
                    for _ in range(2):
                        sol = sol + sla.lu_solve(lu, rhs - K @ sol, check_finite=False)
                dy, du = sol[:m], sol[m:]
            else:
                du = np.zeros(0)
                dy = solveM(r)
            ATdy = p.adjoint(dy)
            dZ = [rd - a for rd, a in zip(Rd, ATdy)]
            dX = [rc - w @ dz @ w for rc, w, dz in zip(Rc, W, dZ)]
            dX = [0.5 * (d + d.T) for d in dX]
            return dX, dy, dZ, du

        def steps(dX, dZ):
            ap, ad = np.inf, np.inf
            tX, tZ = [], []
            for (G, Ginv, d), dx, dz in zip(scal, dX, dZ):
                dxt = Ginv @ dx @ Ginv.T
                dzt = G.T @ dz @ G
                dxt = 0.5 * (dxt + dxt.T)
                dzt = 0.5 * (dzt + dzt.T)
                tX.append(dxt)
                tZ.append(dzt)
                ap = min(ap, _max_step(d, dxt))
                ad = min(ad, _max_step(d, dzt))
            return ap, ad, tX, tZ

        # predictor
        dXa, dya, dZa, _ = direction([-x for x in X])
        if not (np.isfinite(dya).all() and all(np.isfinite(d).all() for d in dXa)):
            log.debug("non-finite direction at iteration %d", it)
            break
        apa, ada, tXa, tZa = steps(dXa, dZa)
        apa, ada = min(1.0, apa), min(1.0, ada)
        xz_aff = sum(np.vdot(x + apa * dx, z + ada * dz) for x, dx, z, dz in zip(X, dXa, Z, dZa))
        expon = max(1.0, 3.0 * min(apa, ada) ** 2)
        sigma = min(1.0, max(0.0, xz_aff / xz) ** expon)

        # corrector
        Rc = []
        for (G, _, d), dxt, dzt in zip(scal, tXa, tZa):
            prod = dxt @ dzt
            R = sigma * mu * np.eye(len(d)) - np.diag(d * d) - 0.5 * (prod + prod.T)
            U = 2.0 * R / (d[:, None] + d[None, :])
            Rc.append(G @ U @ G.T)
        dX, dy, dZ, du = direction(Rc)
        if not (np.isfinite(dy).all() and all(np.isfinite(d).all() for d in dX)):
            log.debug("non-finite direction at iteration %d", it)
            break
        ap, ad, _, _ = steps(dX, dZ)
        tau = 0.9 + 0.09 * min(apa, ada)
        ap, ad = min(1.0, tau * ap), min(1.0, tau * ad)
        X = [0.5 * (x + ap * d + (x + ap * d).T) for x, d in zip(X, dX)]
        Z = [0.5 * (z + ad * d + (z + ad * d).T) for z, d in zip(Z, dZ)]
        y = y + ad * dy
        if f:
            u = u + ap * du

    if status == "max_iter":
        _, X, u, _ = best_p
        _, y, _ = best_d
    ymax = -y  # multipliers of the maximization form
    pinf = np.linalg.norm(p.residual(X, u)) / normb
    slack = p.dual_slack(ymax)
    eigs = _min_eigs(slack)
    primal = p.objective_value(X, u)
    dual = float(b @ ymax)
    return SdpSolution(
        status=status,
        primal_value=primal,
        dual_value=dual,
        y=ymax,
        gap=dual - primal,
        min_dual_slack_eig=eigs,
        iterations=it,
        primal_residual=float(pinf),
        dual_residual=float(max(-eigs.min(), np.max(np.abs(B.T @ ymax - p.free_objective), initial=0.0), 0.0)),
        X=X,
        u=u,
    )


def dual_feasibility_repair(
    p: SdpProblem,
    sol: SdpSolution,
    identity_constraint_index: int,
    feas_margin: float = 1e-10,
) -> np.ndarray:
    """Shift one multiplier so that every dual slack block is positive definite.

    The designated constraint must have the identity as its coefficient on
    every block (and no free-variable coefficient); raising its multiplier by
    ``t`` adds ``t * I`` to each slack block and ``t * b_i`` to the dual
    objective.
    """
    con = p.constraints[identity_constraint_index]
    for j, n in enumerate(p.blocks):
        if j not in con or not np.array_equal(con[j], np.eye(n)):
            raise ValueError("designated constraint is not identity on every block")
    if p.n_free and np.any(p.free[identity_constraint_index] != 0):
        raise ValueError("designated constraint involves free variables")
    y = np.array(sol.y, dtype=float)
    lam = float(np.min(_min_eigs(p.dual_slack(y))))
    shift = max(0.0, -lam + feas_margin)
    y[identity_constraint_index] += shift
    return y


def min_dual_slack_eig(p: SdpProblem, y: np.ndarray) -> float:
    return float(np.min(_min_eigs(p.dual_slack(y))))
