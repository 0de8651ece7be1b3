"""Pure NumPy versions of the compiled recursions in ``_kernels.pyx``.

Same signatures and return values; used when the extension is not built
or when ``MATGARCH_BACKEND=python`` is set.
"""

import numpy as np


def _side_path(Y, C, arch, garch):
    T = Y.shape[0]
    d = C.shape[0]
    S = np.zeros((T, d, d))
    for t in range(T):
        s = C.copy()
        for k in range(arch.shape[0]):
            lag = t - k - 1
            if lag < 0:
                break
            P = arch[k] @ Y[lag]
            s += P @ P.T
        for k in range(garch.shape[0]):
            lag = t - k - 1
            if lag < 0:
                break
            s += garch[k] @ S[lag] @ garch[k].T
        S[t] = s
    return S


def _trace_path(X, w, alpha, beta):
    T = X.shape[0]
    sq = np.einsum("tij,tij->t", X, X)
    y = np.zeros(T)
    for t in range(T):
        s = w
        for k in range(alpha.shape[0]):
            if t - k - 1 >= 0:
                s += alpha[k] * sq[t - k - 1]
        for k in range(beta.shape[0]):
            if t - k - 1 >= 0:
                s += beta[k] * y[t - k - 1]
        y[t] = s
    return y


def filter_states(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta):
    S1 = _side_path(X, A0 @ A0.T, A_arch, A_garch)
    S2 = _side_path(np.swapaxes(X, 1, 2), B0 @ B0.T, B_arch, B_garch)
    y = _trace_path(X, w, np.asarray(alpha), np.asarray(beta))
    return S1, S2, y


def _terms(X, S1, S2, y, want_grad=False):
    T, m, n = X.shape
    logdet = np.zeros(T)
    quad = np.zeros(T)
    if want_grad:
        G1 = np.zeros((T, m, m))
        G2 = np.zeros((T, n, n))
        gy = np.zeros(T)
    for t in range(T):
        yt = y[t]
        if not yt > 0.0:
            return logdet, quad, None, False
        try:
            L1 = np.linalg.cholesky(S1[t])
            L2 = np.linalg.cholesky(S2[t])
        except np.linalg.LinAlgError:
            return logdet, quad, None, False
        ld1 = 2.0 * np.log(np.diag(L1)).sum()
        ld2 = 2.0 * np.log(np.diag(L2)).sum()
        tr1 = np.trace(S1[t])
        tr2 = np.trace(S2[t])
        W = np.linalg.solve(L2, np.linalg.solve(L1, X[t]).T).T
        q = float(np.sum(W * W))
        K = tr1 * tr2 / yt
        logdet[t] = n * (ld1 + m * np.log(yt) - m * np.log(tr1)) + m * (ld2 - n * np.log(tr2))
        quad[t] = K * q
        if want_grad:
            inv1 = np.linalg.inv(S1[t])
            inv2 = np.linalg.inv(S2[t])
            Y = inv1 @ X[t] @ inv2
            P1 = Y @ S2[t] @ Y.T
            P2 = Y.T @ S1[t] @ Y
            G1[t] = 0.5 * (n * inv1 - K * P1 - (n * m / tr1 - tr2 * q / yt) * np.eye(m))
            G2[t] = 0.5 * (m * inv2 - K * P2 - (m * n / tr2 - tr1 * q / yt) * np.eye(n))
            gy[t] = 0.5 * (m * n / yt - K * q / yt)
    if want_grad:
        return logdet, quad, (G1, G2, gy), True
    return logdet, quad, None, True


def loglik_terms(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta):
    S1, S2, y = filter_states(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta)
    logdet, quad, _, ok = _terms(X, S1, S2, y)
    return logdet, quad, ok


def _side_adjoint(G, S, Y, C, arch, garch):
    T, d, _ = S.shape
    lam = G.copy()
    d_arch = np.zeros_like(arch)
    d_garch = np.zeros_like(garch)
    for t in range(T - 1, -1, -1):
        for k in range(garch.shape[0]):
            if t + k + 1 < T:
                lam[t] += garch[k].T @ lam[t + k + 1] @ garch[k]
        for k in range(arch.shape[0]):
            lag = t - k - 1
            if lag >= 0:
                d_arch[k] += 2.0 * lam[t] @ arch[k] @ Y[lag] @ Y[lag].T
        for k in range(garch.shape[0]):
            lag = t - k - 1
            if lag >= 0:
                d_garch[k] += 2.0 * lam[t] @ garch[k] @ S[lag]
    dC = 2.0 * lam.sum(axis=0) @ C
    return dC, d_arch, d_garch


def loglik_grad(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta):
    alpha = np.asarray(alpha)
    beta = np.asarray(beta)
    S1, S2, y = filter_states(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta)
    logdet, quad, parts, ok = _terms(X, S1, S2, y, want_grad=True)
    if not ok:
        return 0.0, None, False
    G1, G2, gy = parts
    total = 0.5 * float(np.sum(logdet + quad))
    dA0, dAa, dAg = _side_adjoint(G1, S1, X, A0, A_arch, A_garch)
    dB0, dBa, dBg = _side_adjoint(G2, S2, np.swapaxes(X, 1, 2), B0, B_arch, B_garch)
    T = X.shape[0]
    sq = np.einsum("tij,tij->t", X, X)
    mu = gy.copy()
    dalpha = np.zeros(alpha.shape[0])
    dbeta = np.zeros(beta.shape[0])
    for t in range(T - 1, -1, -1):
        for k in range(beta.shape[0]):
            if t + k + 1 < T:
                mu[t] += beta[k] * mu[t + k + 1]
        for k in range(alpha.shape[0]):
            if t - k - 1 >= 0:
                dalpha[k] += mu[t] * sq[t - k - 1]
        for k in range(beta.shape[0]):
            if t - k - 1 >= 0:
                dbeta[k] += mu[t] * y[t - k - 1]
    grads = {"A0": dA0, "A_arch": dAa, "A_garch": dAg,
             "B0": dB0, "B_arch": dBa, "B_garch": dBg,
             "w": float(mu.sum()), "alpha": dalpha, "beta": dbeta}
    return total, grads, True
