"""Independent reference solvers used only by the tests."""

import numpy as np
from cvxopt import matrix, solvers


def primal_qp(X, y, c):
    """Optimal value of 0.5 (|w|^2 + b^2) + c sum(xi) s.t. y (w.x + b) >= 1 - xi, xi >= 0.

    Solved as a dense QP over (w, b, xi) with an interior-point method.
    """
    n, d = X.shape
    m = d + 1 + n
    P = np.zeros((m, m))
    P[:d + 1, :d + 1] = np.eye(d + 1)
    q = np.concatenate([np.zeros(d + 1), np.full(n, c)])
    G = np.zeros((2 * n, m))
    G[:n, :d] = -y[:, None] * X
    G[:n, d] = -y
    G[:n, d + 1:] = -np.eye(n)
    G[n:, d + 1:] = -np.eye(n)
    h = np.concatenate([-np.ones(n), np.zeros(n)])
    # very tight stopping tolerances can hit a sqrt domain error inside cvxopt
    # on nearly degenerate instances; loosen step by step before giving up
    for tol in (1e-12, 1e-10, 1e-9):
        opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": tol,
                "maxiters": 200}
        try:
            sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h), options=opts)
            break
        except (ValueError, ArithmeticError):
            continue
    else:
        raise RuntimeError("reference QP solver failed at every tolerance")
    z = np.array(sol["x"]).ravel()
    w, b = z[:d], z[d]
    return 0.5 * (w @ w + b * b) + c * np.maximum(0.0, 1.0 - y * (X @ w + b)).sum()
