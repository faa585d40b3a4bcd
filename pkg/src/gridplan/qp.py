"""Sparse primal-dual interior-point solver for strictly convex QPs.

Solves

    minimize    q^T x + (1/2) x^T diag(h) x
    subject to  G x = g,    A x <= b

with h > 0 elementwise. Instead of driving the barrier parameter to zero,
the solver terminates on the *perturbed* KKT system at a fixed tau:

    diag(h) x + q + G^T nu + A^T mu = 0
    G x = g,   A x + s = b
    mu_i * s_i = tau,   mu > 0,  s > 0

Fixing tau > 0 keeps the solution map a smooth, single-valued function of
the problem data, which is what implicit differentiation needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DispatchError

__all__ = ["QPSolution", "solve_qp", "reduced_kkt"]


@dataclass
class QPSolution:
    """Primal-dual point on the tau-perturbed central path."""

    x: np.ndarray
    nu: np.ndarray
    mu: np.ndarray
    slacks: np.ndarray
    tau: float
    residual: float
    converged: bool
    iterations: int
    objective: float = 0.0


def reduced_kkt(hdiag: np.ndarray, A: sp.spmatrix, G: sp.spmatrix,
                D: np.ndarray) -> sp.csc_matrix:
    """Symmetric reduced KKT matrix [[diag(h) + A^T D A, G^T], [G, 0]].

    The same matrix appears in the Newton step of the barrier solve and in
    the adjoint system of implicit differentiation.
    """
    Hbar = sp.diags(hdiag) + A.T @ sp.diags(D) @ A
    P = G.shape[0]
    if P == 0:
        return sp.csc_matrix(Hbar)
    return sp.bmat([[Hbar, G.T], [G, None]], format="csc")


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    """Largest step in [0, 1] keeping v + step*dv nonnegative."""
    neg = dv < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(q: np.ndarray, hdiag: np.ndarray, A: sp.spmatrix, b: np.ndarray,
             G: sp.spmatrix, g: np.ndarray, *, tau_final: float,
             tol: float = 1e-9, max_iterations: int = 200,
             x0: np.ndarray | None = None) -> QPSolution:
    """Solve the QP to the perturbed KKT conditions at ``tau_final``.

    ``tol`` applies to the scaled max-norm KKT residual. Returns the best
    iterate flagged non-converged when the iteration budget runs out.
    """
    q = np.asarray(q, dtype=float)
    hdiag = np.asarray(hdiag, dtype=float)
    b = np.asarray(b, dtype=float)
    g = np.asarray(g, dtype=float)
    N, M, P = q.size, b.size, g.size
    if (hdiag <= 0).any():
        raise DispatchError("quadratic regularization must be strictly positive")
    if M == 0:
        raise DispatchError("problem must have at least one inequality row")
    if tau_final <= 0:
        raise DispatchError("tau_final must be positive")
    A = sp.csr_matrix(A)
    G = sp.csr_matrix(G) if P else sp.csr_matrix((0, N))

    scale_d = 1.0 + float(np.abs(q).max())
    scale_p = 1.0 + max(float(np.abs(b).max()), float(np.abs(g).max()) if P else 0.0)
    scale_c = 1.0 + tau_final

    x = np.zeros(N) if x0 is None else np.asarray(x0, dtype=float).copy()
    s = b - A @ x
    s = np.maximum(s, 1e-2 * (1.0 + np.abs(b)))
    mu = np.full(M, 0.1 * scale_d)
    nu = np.zeros(P)

    def scaled_residual(x, s, nu, mu):
        r_d = hdiag * x + q + G.T @ nu + A.T @ mu
        r_p1 = G @ x - g
        r_p2 = A @ x + s - b
        r_c = mu * s - tau_final
        res = max(
            np.abs(r_d).max() / scale_d,
            np.abs(r_p1).max() / scale_p if P else 0.0,
            np.abs(r_p2).max() / scale_p,
            np.abs(r_c).max() / scale_c,
        )
        return res, r_d, r_p1, r_p2

    sigma = 0.2
    best = None
    it = 0
    for it in range(max_iterations + 1):
        res, r_d, r_p1, r_p2 = scaled_residual(x, s, nu, mu)
        if best is None or res < best[0]:
            best = (res, x.copy(), s.copy(), nu.copy(), mu.copy())
        if res <= tol:
            break
        if it == max_iterations:
            break

        gap = float(mu @ s) / M
        tau_t = max(tau_final, sigma * gap)
        r_c = mu * s - tau_t

        D = mu / s
        K = reduced_kkt(hdiag, A, G, D)
        w = (mu * r_p2 - r_c) / s
        rhs = np.concatenate([-r_d - A.T @ w, -r_p1])
        try:
            lu = splu(K)
        except RuntimeError as exc:
            raise DispatchError(f"singular KKT system during barrier solve: {exc}") from exc
        d = lu.solve(rhs)
        dx, dnu = d[:N], d[N:]
        ds = -r_p2 - A @ dx
        dmu = D * (A @ dx) + w

        ap = min(1.0, 0.9995 * _max_step(s, ds))
        ad = min(1.0, 0.9995 * _max_step(mu, dmu))
        x += ap * dx
        s += ap * ds
        nu += ad * dnu
        mu += ad * dmu

        # recenter harder when steps get blocked near the boundary
        a = min(ap, ad)
        sigma = 0.5 if a < 0.2 else (0.2 if a < 0.9 else 0.05)

    res, x, s, nu, mu = best
    objective = float(q @ x + 0.5 * (hdiag * x) @ x)
    return QPSolution(
        x=x, nu=nu, mu=mu, slacks=s, tau=tau_final, residual=res,
        converged=bool(res <= tol), iterations=it, objective=objective,
    )
