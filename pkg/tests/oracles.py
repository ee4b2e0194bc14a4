"""Independent reference computations shared by the test modules."""

import numpy as np
import scipy.linalg as sla


def brute_force_mu1(S, M, K, restarts=4, seed=0, iters=4000):
    """Locally optimal gradient descent of u.S.u / u.M.u on {u : K M u = 0}."""
    rng = np.random.default_rng(seed)
    # M-orthonormal kernel rows by Gram-Schmidt
    Q = []
    for k in K:
        v = k.copy()
        for q in Q:
            v -= (q @ M @ v) * q
        Q.append(v / np.sqrt(v @ M @ v))
    Q = np.array(Q)

    def project(u):
        return u - Q.T @ (Q @ (M @ u))

    best = np.inf
    for _ in range(restarts):
        x = project(rng.standard_normal(S.shape[0]))
        x /= np.sqrt(x @ M @ x)
        prev = None
        rho = x @ S @ x
        for _ in range(iters):
            r = project(np.linalg.solve(M, S @ x - rho * (M @ x)))
            basis = [x, r] if prev is None else [x, r, prev]
            W = np.array(basis).T
            W, _ = np.linalg.qr(W)
            w, y = sla.eigh(W.T @ S @ W, W.T @ M @ W)
            new = W @ y[:, 0]
            new = project(new)
            new /= np.sqrt(new @ M @ new)
            prev, x = x, new
            new_rho = x @ S @ x
            if abs(rho - new_rho) < 1e-15 * abs(rho):
                rho = new_rho
                break
            rho = new_rho
        best = min(best, rho)
    return best
