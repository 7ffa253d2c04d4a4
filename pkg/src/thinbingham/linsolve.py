"""Linear saddle-point solves shared by the Stokes and Bingham iterations.

Each outer iteration of the augmented-Lagrangian loop solves

    [ A  B^T ] [u]   [b_u]
    [ B   0  ] [p] = [b_p]

with a fixed SPD matrix A = rho D^T W D, so the factorization or the
preconditioner is built once per problem and reused.  Small systems go
through a sparse LU of the saddle matrix augmented with a mean-pressure
constraint; large 3-D systems use MINRES with a block-diagonal
preconditioner (algebraic multigrid on A, diagonal Schur estimate on the
pressure block) followed by a divergence projection that pushes the
constraint residual down to the requested tolerance.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DIRECT_LIMIT = 60_000


class LinearSolveError(RuntimeError):
    """Linear solver produced NaNs or failed to reach its tolerance."""


class SaddleSolver:
    """Reusable solver for one fixed pair (A, B)."""

    def __init__(self, A: sp.csr_matrix, B: sp.csr_matrix,
                 method: str = "auto", div_tol: float = 1e-10):
        self.A = sp.csr_matrix(A)
        self.B = sp.csr_matrix(B)
        self.n = A.shape[0]
        self.m = B.shape[0]
        self.div_tol = div_tol
        if method == "auto":
            method = "direct" if self.n + self.m <= DIRECT_LIMIT else "minres"
        self.method = method
        if method == "direct":
            self._setup_direct()
        elif method == "minres":
            self._setup_minres()
        else:
            raise ValueError(f"unknown linear solver method {method!r}")

    # -- direct -------------------------------------------------------------
    def _setup_direct(self):
        # the constraint rows sum to zero (no net flux), so the last row is
        # redundant; dropping it and grounding that cell's pressure gives an
        # equivalent nonsingular system without a fill-producing dense row
        Bred = self.B[:-1, :]
        K = sp.bmat([[self.A, Bred.T], [Bred, None]], format="csc")
        self._lu = spla.splu(K)

    def _solve_direct(self, bu, bp):
        rhs = np.concatenate([bu, bp[:-1]])
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise LinearSolveError("direct saddle solve produced non-finite values")
        p = np.concatenate([sol[self.n:], [0.0]])
        return sol[:self.n], p

    # -- minres -------------------------------------------------------------
    def _setup_minres(self):
        import pyamg

        # near-nullspace: one constant vector per velocity component is a
        # good smooth-mode hint even though walls remove true rigid motions
        self._K = sp.bmat([[self.A, self.B.T], [self.B, None]], format="csr")
        nns = np.ones((self.n, 1))
        self._ml = pyamg.smoothed_aggregation_solver(
            sp.csr_matrix(self.A), B=nns, max_coarse=500)
        self._amg_op = self._ml.aspreconditioner(cycle="V")
        adiag = self.A.diagonal()
        adiag = np.where(adiag > 0, adiag, 1.0)
        B2 = self.B.multiply(self.B)
        schur_diag = np.asarray(B2 @ (1.0 / adiag)).ravel()
        schur_diag = np.where(schur_diag > 0, schur_diag, 1.0)
        self._schur_inv = 1.0 / schur_diag
        # divergence projection operator B B^T (anisotropic Poisson);
        # ground one DOF: B^T kills constants, so the representative is free
        BBt = sp.lil_matrix(self.B @ self.B.T)
        BBt[0, 0] += BBt[0, 0]
        BBt = sp.csr_matrix(BBt)
        self._bbt_ml = pyamg.smoothed_aggregation_solver(
            BBt, B=np.ones((self.m, 1)), max_coarse=500)
        self._bbt = BBt

    def _prec(self, x):
        out = np.empty_like(x)
        out[:self.n] = self._amg_op @ x[:self.n]
        out[self.n:] = self._schur_inv * x[self.n:]
        return out

    def _project_divergence(self, u, bp):
        """Remove the divergence residual: u <- u - B^T (BB^T)^-1 (Bu - bp)."""
        r = self.B @ u - bp
        if np.abs(r).max() <= self.div_tol:
            return u
        r = r - r.mean()
        phi = self._bbt_ml.solve(r, tol=1e-12, maxiter=100, accel="cg")
        return u - self.B.T @ phi

    def _solve_minres(self, bu, bp, rtol=1e-10):
        rhs = np.concatenate([bu, bp])
        rhs[self.n:] -= rhs[self.n:].mean()
        M = spla.LinearOperator(self._K.shape, matvec=self._prec)
        x0 = getattr(self, "_last", None)
        sol, info = spla.minres(self._K, rhs, x0=x0, M=M,
                                rtol=rtol, maxiter=1000)
        if not np.all(np.isfinite(sol)):
            raise LinearSolveError("minres produced non-finite values")
        self._last = sol.copy()
        u = sol[:self.n]
        p = sol[self.n:]
        for _ in range(3):
            nu = self._project_divergence(u, bp)
            if nu is u:
                break
            u = nu
        p = p - p.mean()
        return u, p

    def solve(self, bu: np.ndarray, bp: np.ndarray | None = None,
              rtol: float = 1e-10):
        """Return (u, p) with A u + B^T p = bu, B u = bp, mean(p) = 0.

        rtol only affects the iterative path; the divergence projection
        enforces the constraint to div_tol regardless.
        """
        if bp is None:
            bp = np.zeros(self.m)
        if self.method == "direct":
            u, p = self._solve_direct(bu, bp)
        else:
            u, p = self._solve_minres(bu, bp, rtol=rtol)
        return u, p - p.mean()
