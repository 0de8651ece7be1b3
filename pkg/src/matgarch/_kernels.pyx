# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled recursions for the matrix GARCH filter, likelihood and adjoint gradient.

All matrices are C-contiguous float64, row-major. Lag stacks have shape
(q, d, d). Index t = 0 corresponds to the first observation; every lagged
quantity before the sample start is zero.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy

cnp.import_array()


cdef inline void mm(const double* A, const double* B, double* C,
                    int p, int q, int r) noexcept nogil:
    # C = A B with A (p,q), B (q,r)
    cdef int i, j, k
    cdef double a
    memset(C, 0, p * r * sizeof(double))
    for i in range(p):
        for k in range(q):
            a = A[i * q + k]
            if a != 0.0:
                for j in range(r):
                    C[i * r + j] += a * B[k * r + j]


cdef inline void mm_nt(const double* A, const double* B, double* C,
                       int p, int q, int r) noexcept nogil:
    # C = A B' with A (p,q), B (r,q)
    cdef int i, j, k
    cdef double s
    for i in range(p):
        for j in range(r):
            s = 0.0
            for k in range(q):
                s += A[i * q + k] * B[j * q + k]
            C[i * r + j] = s


cdef inline void mm_tn(const double* A, const double* B, double* C,
                       int p, int q, int r) noexcept nogil:
    # C = A' B with A (q,p), B (q,r)
    cdef int i, j, k
    cdef double a
    memset(C, 0, p * r * sizeof(double))
    for k in range(q):
        for i in range(p):
            a = A[k * p + i]
            if a != 0.0:
                for j in range(r):
                    C[i * r + j] += a * B[k * r + j]


cdef inline void transpose(const double* A, double* B, int p, int q) noexcept nogil:
    # B (q,p) = A' with A (p,q)
    cdef int i, j
    for i in range(p):
        for j in range(q):
            B[j * p + i] = A[i * q + j]


cdef inline int cholesky(const double* A, double* L, int d) noexcept nogil:
    cdef int i, j, k
    cdef double s
    memset(L, 0, d * d * sizeof(double))
    for j in range(d):
        s = A[j * d + j]
        for k in range(j):
            s -= L[j * d + k] * L[j * d + k]
        if not (s > 0.0) or not isfinite(s):
            return -1
        L[j * d + j] = s ** 0.5
        for i in range(j + 1, d):
            s = A[i * d + j]
            for k in range(j):
                s -= L[i * d + k] * L[j * d + k]
            L[i * d + j] = s / L[j * d + j]
    return 0


cdef inline void solve_lower(const double* L, double* B, int d, int r) noexcept nogil:
    # B <- L^{-1} B, B has shape (d, r)
    cdef int i, j, k
    cdef double s
    for j in range(r):
        for i in range(d):
            s = B[i * r + j]
            for k in range(i):
                s -= L[i * d + k] * B[k * r + j]
            B[i * r + j] = s / L[i * d + i]


cdef inline void solve_upper_t(const double* L, double* B, int d, int r) noexcept nogil:
    # B <- L'^{-1} B, B has shape (d, r)
    cdef int i, j, k
    cdef double s
    for j in range(r):
        for i in range(d - 1, -1, -1):
            s = B[i * r + j]
            for k in range(i + 1, d):
                s -= L[k * d + i] * B[k * r + j]
            B[i * r + j] = s / L[i * d + i]


cdef inline double trace(const double* A, int d) noexcept nogil:
    cdef int i
    cdef double s = 0.0
    for i in range(d):
        s += A[i * d + i]
    return s


cdef void side_step(double[:, :, ::1] S, const double[:, :, ::1] X, int t,
                    const double* C0, const double[:, :, ::1] arch,
                    const double[:, :, ::1] garch, int d, int other,
                    int transposed, double* P, double* Q, double* XT) noexcept nogil:
    """S[t] = C0 + sum_k A_k Y_{t-k} Y_{t-k}' A_k' + sum_k G_k S[t-k] G_k'.

    Y = X (row side) or X' (column side, ``transposed``).
    """
    cdef int k, i, lag
    cdef double* out = &S[t, 0, 0]
    memcpy(out, C0, d * d * sizeof(double))
    for k in range(arch.shape[0]):
        lag = t - k - 1
        if lag < 0:
            break
        if transposed:
            transpose(&X[lag, 0, 0], XT, other, d)
            mm(&arch[k, 0, 0], XT, P, d, d, other)
        else:
            mm(&arch[k, 0, 0], &X[lag, 0, 0], P, d, d, other)
        mm_nt(P, P, Q, d, other, d)
        for i in range(d * d):
            out[i] += Q[i]
    for k in range(garch.shape[0]):
        lag = t - k - 1
        if lag < 0:
            break
        mm(&garch[k, 0, 0], &S[lag, 0, 0], Q, d, d, d)
        mm_nt(Q, &garch[k, 0, 0], P, d, d, d)
        for i in range(d * d):
            out[i] += P[i]


def filter_states(const double[:, :, ::1] X,
                  const double[:, ::1] A0, const double[:, :, ::1] A_arch,
                  const double[:, :, ::1] A_garch,
                  const double[:, ::1] B0, const double[:, :, ::1] B_arch,
                  const double[:, :, ::1] B_garch,
                  double w, const double[::1] alpha, const double[::1] beta):
    """Return (S1, S2, y) paths of shapes (T,m,m), (T,n,n), (T,)."""
    cdef int T = X.shape[0], m = X.shape[1], n = X.shape[2]
    S1_arr = np.zeros((T, m, m))
    S2_arr = np.zeros((T, n, n))
    y_arr = np.zeros(T)
    cdef double[:, :, ::1] S1 = S1_arr
    cdef double[:, :, ::1] S2 = S2_arr
    cdef double[::1] y = y_arr
    _filter(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta, S1, S2, y)
    return S1_arr, S2_arr, y_arr


cdef void _filter(const double[:, :, ::1] X,
                  const double[:, ::1] A0, const double[:, :, ::1] A_arch,
                  const double[:, :, ::1] A_garch,
                  const double[:, ::1] B0, const double[:, :, ::1] B_arch,
                  const double[:, :, ::1] B_garch,
                  double w, const double[::1] alpha, const double[::1] beta,
                  double[:, :, ::1] S1, double[:, :, ::1] S2, double[::1] y) noexcept nogil:
    cdef int T = X.shape[0], m = X.shape[1], n = X.shape[2]
    cdef int d = m if m > n else n
    cdef int t, k, i, lag
    cdef double s, v
    cdef double* C1 = <double*> malloc(m * m * sizeof(double))
    cdef double* C2 = <double*> malloc(n * n * sizeof(double))
    cdef double* P = <double*> malloc(d * d * sizeof(double))
    cdef double* Q = <double*> malloc(d * d * sizeof(double))
    cdef double* XT = <double*> malloc(m * n * sizeof(double))
    cdef double* sq = <double*> malloc(T * sizeof(double))
    mm_nt(&A0[0, 0], &A0[0, 0], C1, m, m, m)
    mm_nt(&B0[0, 0], &B0[0, 0], C2, n, n, n)
    for t in range(T):
        s = 0.0
        for i in range(m * n):
            v = (&X[t, 0, 0])[i]
            s += v * v
        sq[t] = s
    for t in range(T):
        side_step(S1, X, t, C1, A_arch, A_garch, m, n, 0, P, Q, XT)
        side_step(S2, X, t, C2, B_arch, B_garch, n, m, 1, P, Q, XT)
        s = w
        for k in range(alpha.shape[0]):
            lag = t - k - 1
            if lag >= 0:
                s += alpha[k] * sq[lag]
        for k in range(beta.shape[0]):
            lag = t - k - 1
            if lag >= 0:
                s += beta[k] * y[lag]
        y[t] = s
    free(C1); free(C2); free(P); free(Q); free(XT); free(sq)


def loglik_terms(const double[:, :, ::1] X,
                 const double[:, ::1] A0, const double[:, :, ::1] A_arch,
                 const double[:, :, ::1] A_garch,
                 const double[:, ::1] B0, const double[:, :, ::1] B_arch,
                 const double[:, :, ::1] B_garch,
                 double w, const double[::1] alpha, const double[::1] beta):
    """Per-time log|Sigma_t| and vec(X_t)' Sigma_t^{-1} vec(X_t).

    Returns (logdet, quad, ok); ok is False when some S_t is not positive
    definite or some y_t is not positive.
    """
    cdef int T = X.shape[0], m = X.shape[1], n = X.shape[2]
    S1_arr = np.zeros((T, m, m))
    S2_arr = np.zeros((T, n, n))
    y_arr = np.zeros(T)
    logdet_arr = np.zeros(T)
    quad_arr = np.zeros(T)
    cdef double[:, :, ::1] S1 = S1_arr
    cdef double[:, :, ::1] S2 = S2_arr
    cdef double[::1] y = y_arr
    cdef double[::1] logdet = logdet_arr
    cdef double[::1] quad = quad_arr
    cdef int ok
    with nogil:
        _filter(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta, S1, S2, y)
        ok = _terms(X, S1, S2, y, logdet, quad, None, None, None)
    return logdet_arr, quad_arr, bool(ok)


cdef int _terms(const double[:, :, ::1] X, double[:, :, ::1] S1,
                double[:, :, ::1] S2, double[::1] y,
                double[::1] logdet, double[::1] quad,
                double[:, :, ::1] G1, double[:, :, ::1] G2,
                double[::1] gy) noexcept nogil:
    """Fill per-time terms; when G1 is given also the partial derivatives of
    l_t = (logdet + quad)/2 with respect to S1_t, S2_t and y_t."""
    cdef int T = X.shape[0], m = X.shape[1], n = X.shape[2]
    cdef int t, i, j
    cdef int status = 1
    cdef double ld1, ld2, tr1, tr2, yt, q, K, c1, c2
    cdef double* L1 = <double*> malloc(m * m * sizeof(double))
    cdef double* L2 = <double*> malloc(n * n * sizeof(double))
    cdef double* W = <double*> malloc(m * n * sizeof(double))
    cdef double* WT = <double*> malloc(m * n * sizeof(double))
    cdef double* Y = <double*> malloc(m * n * sizeof(double))
    cdef double* YS = <double*> malloc(m * n * sizeof(double))
    cdef double* Inv1 = <double*> malloc(m * m * sizeof(double))
    cdef double* Inv2 = <double*> malloc(n * n * sizeof(double))
    cdef double* P1 = <double*> malloc(m * m * sizeof(double))
    cdef double* P2 = <double*> malloc(n * n * sizeof(double))
    cdef double* g
    cdef bint want_grad = G1 is not None
    for t in range(T):
        yt = y[t]
        if not (yt > 0.0) or cholesky(&S1[t, 0, 0], L1, m) != 0 \
                or cholesky(&S2[t, 0, 0], L2, n) != 0:
            status = 0
            break
        ld1 = 0.0
        for i in range(m):
            ld1 += log(L1[i * m + i])
        ld1 *= 2.0
        ld2 = 0.0
        for i in range(n):
            ld2 += log(L2[i * n + i])
        ld2 *= 2.0
        tr1 = trace(&S1[t, 0, 0], m)
        tr2 = trace(&S2[t, 0, 0], n)
        # W = L1^{-1} X L2^{-T}
        memcpy(W, &X[t, 0, 0], m * n * sizeof(double))
        solve_lower(L1, W, m, n)
        transpose(W, WT, m, n)
        solve_lower(L2, WT, n, m)
        q = 0.0
        for i in range(m * n):
            q += WT[i] * WT[i]
        K = tr1 * tr2 / yt
        logdet[t] = n * (ld1 + m * log(yt) - m * log(tr1)) + m * (ld2 - n * log(tr2))
        quad[t] = K * q
        if not want_grad:
            continue
        # Y = S1^{-1} X S2^{-1} = L1^{-T} W L2^{-1}; WT holds (L1^{-1} X L2^{-T})'
        solve_upper_t(L2, WT, n, m)          # WT <- L2^{-T} W' = (W L2^{-1})'
        transpose(WT, Y, n, m)               # Y <- W L2^{-1}
        solve_upper_t(L1, Y, m, n)           # Y <- L1^{-T} W L2^{-1}
        # inverses
        memset(Inv1, 0, m * m * sizeof(double))
        for i in range(m):
            Inv1[i * m + i] = 1.0
        solve_lower(L1, Inv1, m, m)
        solve_upper_t(L1, Inv1, m, m)
        memset(Inv2, 0, n * n * sizeof(double))
        for i in range(n):
            Inv2[i * n + i] = 1.0
        solve_lower(L2, Inv2, n, n)
        solve_upper_t(L2, Inv2, n, n)
        # P1 = Y S2 Y', P2 = Y' S1 Y
        mm(Y, &S2[t, 0, 0], YS, m, n, n)
        mm_nt(YS, Y, P1, m, n, m)
        mm_tn(Y, &S1[t, 0, 0], WT, n, m, m)  # WT (n,m) = Y' S1
        mm(WT, Y, P2, n, m, n)
        c1 = n * m / tr1 - tr2 * q / yt
        c2 = m * n / tr2 - tr1 * q / yt
        g = &G1[t, 0, 0]
        for i in range(m):
            for j in range(m):
                g[i * m + j] = 0.5 * (n * Inv1[i * m + j] - K * P1[i * m + j])
            g[i * m + i] -= 0.5 * c1
        g = &G2[t, 0, 0]
        for i in range(n):
            for j in range(n):
                g[i * n + j] = 0.5 * (m * Inv2[i * n + j] - K * P2[i * n + j])
            g[i * n + i] -= 0.5 * c2
        gy[t] = 0.5 * (m * n / yt - K * q / yt)
    free(L1); free(L2); free(W); free(WT); free(Y); free(YS)
    free(Inv1); free(Inv2); free(P1); free(P2)
    return status


cdef void side_adjoint(double[:, :, ::1] G, const double[:, :, ::1] S,
                       const double[:, :, ::1] X, const double[:, ::1] C,
                       const double[:, :, ::1] arch, const double[:, :, ::1] garch,
                       double[:, ::1] dC, double[:, :, ::1] darch,
                       double[:, :, ::1] dgarch, int transposed) noexcept nogil:
    """Backward pass for one side; G is overwritten by the total adjoint."""
    cdef int T = X.shape[0]
    cdef int d = S.shape[1]
    cdef int other = X.shape[2] if not transposed else X.shape[1]
    cdef int t, k, i, lag, ahead
    cdef double* lam
    cdef double* tot = <double*> malloc(d * d * sizeof(double))
    cdef double* P = <double*> malloc(d * d * sizeof(double))
    cdef double* Q = <double*> malloc(d * d * sizeof(double))
    cdef double* R = <double*> malloc(d * other * sizeof(double))
    cdef double* M = <double*> malloc(d * other * sizeof(double))
    cdef double* XT = <double*> malloc(d * other * sizeof(double))
    cdef const double* Y
    memset(tot, 0, d * d * sizeof(double))
    for t in range(T - 1, -1, -1):
        lam = &G[t, 0, 0]
        for k in range(garch.shape[0]):
            ahead = t + k + 1
            if ahead >= T:
                continue
            # lam += G_k' Lam[ahead] G_k
            mm(&G[ahead, 0, 0], &garch[k, 0, 0], P, d, d, d)
            mm_tn(&garch[k, 0, 0], P, Q, d, d, d)
            for i in range(d * d):
                lam[i] += Q[i]
        for i in range(d * d):
            tot[i] += lam[i]
        for k in range(arch.shape[0]):
            lag = t - k - 1
            if lag < 0:
                break
            if transposed:
                transpose(&X[lag, 0, 0], XT, other, d)
                Y = XT
            else:
                Y = &X[lag, 0, 0]
            mm(&arch[k, 0, 0], Y, R, d, d, other)   # R = A_k Y
            mm(lam, R, M, d, d, other)               # M = Lam A_k Y
            mm_nt(M, Y, P, d, other, d)              # P = Lam A_k Y Y'
            for i in range(d * d):
                (&darch[k, 0, 0])[i] += 2.0 * P[i]
        for k in range(garch.shape[0]):
            lag = t - k - 1
            if lag < 0:
                break
            mm(lam, &garch[k, 0, 0], P, d, d, d)
            mm(P, &S[lag, 0, 0], Q, d, d, d)
            for i in range(d * d):
                (&dgarch[k, 0, 0])[i] += 2.0 * Q[i]
    mm(tot, &C[0, 0], P, d, d, d)
    for i in range(d * d):
        (&dC[0, 0])[i] = 2.0 * P[i]
    free(tot); free(P); free(Q); free(R); free(M); free(XT)


def loglik_grad(const double[:, :, ::1] X,
                const double[:, ::1] A0, const double[:, :, ::1] A_arch,
                const double[:, :, ::1] A_garch,
                const double[:, ::1] B0, const double[:, :, ::1] B_arch,
                const double[:, :, ::1] B_garch,
                double w, const double[::1] alpha, const double[::1] beta):
    """Sum over t of l_t and its gradient with respect to every matrix entry.

    Returns (total, grads, ok) where grads is a dict keyed like the inputs.
    Gradients are with respect to all entries (no structure imposed).
    """
    cdef int T = X.shape[0], m = X.shape[1], n = X.shape[2]
    cdef int qa = alpha.shape[0], qb = beta.shape[0]
    S1_arr = np.zeros((T, m, m))
    S2_arr = np.zeros((T, n, n))
    y_arr = np.zeros(T)
    logdet_arr = np.zeros(T)
    quad_arr = np.zeros(T)
    G1_arr = np.zeros((T, m, m))
    G2_arr = np.zeros((T, n, n))
    gy_arr = np.zeros(T)
    cdef double[:, :, ::1] S1 = S1_arr
    cdef double[:, :, ::1] S2 = S2_arr
    cdef double[::1] y = y_arr
    cdef double[::1] logdet = logdet_arr
    cdef double[::1] quad = quad_arr
    cdef double[:, :, ::1] G1 = G1_arr
    cdef double[:, :, ::1] G2 = G2_arr
    cdef double[::1] gy = gy_arr
    dA0_arr = np.zeros((m, m))
    dAa_arr = np.zeros((A_arch.shape[0], m, m))
    dAg_arr = np.zeros((A_garch.shape[0], m, m))
    dB0_arr = np.zeros((n, n))
    dBa_arr = np.zeros((B_arch.shape[0], n, n))
    dBg_arr = np.zeros((B_garch.shape[0], n, n))
    dalpha_arr = np.zeros(qa)
    dbeta_arr = np.zeros(qb)
    cdef double[:, ::1] dA0 = dA0_arr
    cdef double[:, :, ::1] dAa = dAa_arr
    cdef double[:, :, ::1] dAg = dAg_arr
    cdef double[:, ::1] dB0 = dB0_arr
    cdef double[:, :, ::1] dBa = dBa_arr
    cdef double[:, :, ::1] dBg = dBg_arr
    cdef double[::1] dalpha = dalpha_arr
    cdef double[::1] dbeta = dbeta_arr
    cdef double dw = 0.0, total = 0.0, mu, s
    cdef int ok, t, k, i, lag
    with nogil:
        _filter(X, A0, A_arch, A_garch, B0, B_arch, B_garch, w, alpha, beta, S1, S2, y)
        ok = _terms(X, S1, S2, y, logdet, quad, G1, G2, gy)
        if ok:
            for t in range(T):
                total += 0.5 * (logdet[t] + quad[t])
            side_adjoint(G1, S1, X, A0, A_arch, A_garch, dA0, dAa, dAg, 0)
            side_adjoint(G2, S2, X, B0, B_arch, B_garch, dB0, dBa, dBg, 1)
            for t in range(T - 1, -1, -1):
                mu = gy[t]
                for k in range(qb):
                    if t + k + 1 < T:
                        mu += beta[k] * gy[t + k + 1]
                gy[t] = mu
                dw += mu
                for k in range(qa):
                    lag = t - k - 1
                    if lag >= 0:
                        s = 0.0
                        for i in range(m * n):
                            s += (&X[lag, 0, 0])[i] * (&X[lag, 0, 0])[i]
                        dalpha[k] += mu * s
                for k in range(qb):
                    lag = t - k - 1
                    if lag >= 0:
                        dbeta[k] += mu * y[lag]
    grads = {"A0": dA0_arr, "A_arch": dAa_arr, "A_garch": dAg_arr,
             "B0": dB0_arr, "B_arch": dBa_arr, "B_garch": dBg_arr,
             "w": dw, "alpha": dalpha_arr, "beta": dbeta_arr}
    return total, grads, bool(ok)
