"""Matrix factor GARCH: projected loadings, varimax, factor extraction and
high-dimensional covariance forecasts."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .core import MatrixPanel, Theta, as_panel, filter_path, forecast_state
from .estimate import FitResult, fit
from .simulate import InnovationLaw, simulate

DENSE_LIMIT = 256


class FactorError(RuntimeError):
    pass


def _top_eigvecs(M: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    vecs = vecs[:, :k]
    # sign convention: largest-magnitude entry of each column positive
    piv = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[piv, np.arange(k)])
    return vals, vecs


def _row_moment(X: np.ndarray, C: np.ndarray | None) -> np.ndarray:
    Y = X if C is None else X @ C
    return np.einsum("tij,tkj->ik", Y, Y) / (X.shape[0] * Y.shape[2])


def _col_moment(X: np.ndarray, R: np.ndarray | None) -> np.ndarray:
    if R is None:
        return np.einsum("tji,tjk->ik", X, X) / (X.shape[0] * X.shape[1])
    Y = np.einsum("ik,tij->tkj", R, X)
    return np.einsum("tji,tjk->ik", Y, Y) / (X.shape[0] * Y.shape[1])


def _subspace_gap(A: np.ndarray, B: np.ndarray) -> float:
    return float(np.linalg.norm(A @ A.T - B @ B.T, 2))


def subspace_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Spectral norm of the difference of the orthogonal projectors onto
    span(A) and span(B)."""
    qa, _ = np.linalg.qr(A)
    qb, _ = np.linalg.qr(B)
    return _subspace_gap(qa, qb)


def estimate_loadings(panel, k1: int, k2: int, max_iter: int = 100,
                      tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Iterated projected eigendecomposition for the row and column loadings.

    R starts at the top-k1 eigenvectors of sum_t X_t X_t'; then C and R are
    updated in turn from the second moments of X_t' R and X_t C until the
    projectors move less than ``tol``.
    """
    panel = as_panel(panel)
    m, n = panel.dims
    if not (1 <= k1 <= m and 1 <= k2 <= n):
        raise ValueError(f"need 1 <= k1 <= m and 1 <= k2 <= n, got ({k1},{k2}) for ({m},{n})")
    if panel.T < 2:
        raise ValueError("need at least two observations")
    X = panel.data
    _, R = _top_eigvecs(_row_moment(X, None), k1)
    C = None
    for _ in range(max_iter):
        vals, C_new = _top_eigvecs(_col_moment(X, R), k2)
        vals, R_new = _top_eigvecs(_row_moment(X, C_new), k1)
        if vals[k1 - 1] <= 1e-14 * max(vals[0], 1e-300):
            raise FactorError("k1 exceeds the numerical rank of the projected second moment")
        change = _subspace_gap(R_new, R) + (_subspace_gap(C_new, C) if C is not None else np.inf)
        R, C = R_new, C_new
        if change < tol:
            break
    return R, C


def _ratio_select(vals: np.ndarray, k_max: int, floor: float) -> int:
    vals = np.clip(vals, 0.0, None)
    if vals[0] <= floor:
        raise FactorError("all eigenvalues are below the numerical floor")
    lam = np.maximum(vals[: k_max + 1], floor * 1e-6)
    ratios = lam[:-1] / lam[1:]
    return int(np.argmax(ratios)) + 1  # argmax returns the first maximiser


def eigenvalue_ratio(panel, k_max: int) -> tuple[int, int]:
    """Select (k1, k2) by the largest ratio of consecutive eigenvalues.

    The row side uses the second moment of X_t C0, where C0 holds the top
    k_max column eigenvectors of the raw column second moment; the column
    side is symmetric. Ties go to the smaller k.
    """
    panel = as_panel(panel)
    m, n = panel.dims
    if not 1 <= k_max < min(m, n):
        raise ValueError(f"k_max must satisfy 1 <= k_max < min(m, n) = {min(m, n)}")
    X = panel.data
    _, C0 = _top_eigvecs(_col_moment(X, None), k_max)
    _, R0 = _top_eigvecs(_row_moment(X, None), k_max)
    vr, _ = _top_eigvecs(_row_moment(X, C0), 1)
    vc, _ = _top_eigvecs(_col_moment(X, R0), 1)
    floor = 1e-12 * float(np.mean(X * X)) + 1e-300
    return _ratio_select(vr, k_max, floor), _ratio_select(vc, k_max, floor)


def varimax_criterion(load: np.ndarray) -> float:
    L2 = load ** 2
    return float(np.sum(np.mean(L2 ** 2, axis=0) - np.mean(L2, axis=0) ** 2))


def varimax(load: np.ndarray, tol: float = 1e-8, max_iter: int = 1000):
    """Raw varimax by cycling through pairwise plane rotations.

    Returns (load @ G, G) with G orthogonal.
    """
    L = np.array(load, dtype=float)
    d, k = L.shape
    G = np.eye(k)
    if k == 1:
        return L, G
    crit = varimax_criterion(L)
    for _ in range(max_iter):
        for i in range(k - 1):
            for j in range(i + 1, k):
                x, y = L[:, i], L[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                A, B = u.sum(), v.sum()
                num = 2.0 * (np.dot(u, v) - A * B / d)
                den = np.dot(u, u) - np.dot(v, v) - (A * A - B * B) / d
                phi = 0.25 * np.arctan2(num, den)
                c, s = np.cos(phi), np.sin(phi)
                rot = np.array([[c, -s], [s, c]])
                L[:, [i, j]] = L[:, [i, j]] @ rot
                G[:, [i, j]] = G[:, [i, j]] @ rot
        new = varimax_criterion(L)
        if abs(new - crit) < tol:
            crit = new
            break
        crit = new
    return L, G


def extract_factors(panel, R: np.ndarray, C: np.ndarray) -> MatrixPanel:
    """F_t = R' X_t C."""
    panel = as_panel(panel)
    if R.shape[0] != panel.m or C.shape[0] != panel.n:
        raise ValueError(f"loadings {R.shape}, {C.shape} do not match panel dims {panel.dims}")
    F = np.einsum("ik,tij,jl->tkl", R, panel.data, C)
    return MatrixPanel(F, panel.time_labels)


def reconstruct(factors, R: np.ndarray, C: np.ndarray) -> np.ndarray:
    F = as_panel(factors).data
    return np.einsum("ik,tkl,jl->tij", R, F, C)


@dataclass(frozen=True, eq=False)
class FactorFit:
    R_load: np.ndarray
    C_load: np.ndarray
    k1: int
    k2: int
    factors: MatrixPanel
    sigma_e: np.ndarray
    garch: FitResult
    sigma_e_diagonal: bool = False

    @property
    def dims(self) -> tuple[int, int]:
        return self.R_load.shape[0], self.C_load.shape[0]

    def sigma_e_matrix(self) -> np.ndarray:
        return np.diag(self.sigma_e) if self.sigma_e_diagonal else self.sigma_e


def idiosyncratic_cov(panel, R: np.ndarray, C: np.ndarray, factors=None):
    """Average outer product of vec(E_t); diagonal only above DENSE_LIMIT.

    Returns (sigma_e, is_diagonal).
    """
    panel = as_panel(panel)
    F = extract_factors(panel, R, C) if factors is None else factors
    E = panel.data - reconstruct(F, R, C)
    e = E.transpose(0, 2, 1).reshape(panel.T, -1)
    mn = e.shape[1]
    if mn <= DENSE_LIMIT:
        S = e.T @ e / panel.T
        return 0.5 * (S + S.T), False
    warnings.warn(f"mn={mn} exceeds {DENSE_LIMIT}; idiosyncratic covariance kept diagonal",
                  stacklevel=2)
    return np.mean(e * e, axis=0), True


def fit_factor_garch(panel, k1: int | None = None, k2: int | None = None,
                     k_max: int | None = None, rotate: bool = True,
                     structure: str = "diagonal", order=(1, 1), multistarts: int = 5,
                     seed: int | None = 0, compute_sandwich: bool = True,
                     start: Theta | None = None) -> FactorFit:
    """Loadings, varimax rotation, factor extraction and a matrix GARCH fit
    on the factor panel. Factor numbers default to the eigenvalue-ratio
    choice with ``k_max`` (default min(m, n) // 2)."""
    panel = as_panel(panel)
    if k1 is None or k2 is None:
        if k_max is None:
            k_max = max(1, min(panel.m, panel.n) // 2)
        s1, s2 = eigenvalue_ratio(panel, k_max)
        k1 = s1 if k1 is None else k1
        k2 = s2 if k2 is None else k2
    R, C = estimate_loadings(panel, k1, k2)
    if rotate:
        R, _ = varimax(R)
        C, _ = varimax(C)
    F = extract_factors(panel, R, C)
    sigma_e, diag = idiosyncratic_cov(panel, R, C, F)
    g = fit(F, structure=structure, order=order, multistarts=multistarts, seed=seed,
            compute_sandwich=compute_sandwich, start=start)
    return FactorFit(R, C, k1, k2, F, sigma_e, g, diag)


def factor_covariance(R: np.ndarray, C: np.ndarray, U: np.ndarray, V: np.ndarray,
                      sigma_e: np.ndarray, sigma_e_diagonal: bool = False) -> np.ndarray:
    """(C (x) R)(V (x) U)(C (x) R)' + Sigma_e, assembled as (C V C') (x) (R U R')."""
    low = np.kron(C @ V @ C.T, R @ U @ R.T)
    out = low + (np.diag(sigma_e) if sigma_e_diagonal else sigma_e)
    return 0.5 * (out + out.T)


def sigma_x_forecast(ffit: FactorFit, t: int | None = None) -> np.ndarray:
    """Conditional covariance of vec(X_t) from the factor GARCH fit.

    ``t=None`` gives the one-step-ahead forecast beyond the sample; an
    in-sample index gives the filtered conditional covariance at t.
    """
    theta = ffit.garch.theta_hat
    if t is None:
        U, V, _ = forecast_state(ffit.factors, theta)
    else:
        state = filter_path(ffit.factors, theta)
        U, V = state.U[t], state.V[t]
    out = factor_covariance(ffit.R_load, ffit.C_load, U, V, ffit.sigma_e, ffit.sigma_e_diagonal)
    lam_min = np.linalg.eigvalsh(out)[0]
    if lam_min <= 1e-12 * np.abs(out).max():
        warnings.warn("Sigma_x is numerically singular; portfolio weights are unreliable",
                      stacklevel=2)
    return out


# ---------------------------------------------------------------------------
# Synthetic factor GARCH panels
# ---------------------------------------------------------------------------


def random_loading(d: int, k: int, rng) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, k)))
    return q


def simulate_factor_panel(R: np.ndarray, C: np.ndarray, theta_f: Theta, T: int,
                          noise_sd: np.ndarray | float = 1.0, burn_in: int = 500,
                          law: InnovationLaw | None = None, seed=None):
    """X_t = R F_t C' + E_t with F_t matrix GARCH and independent Gaussian
    E_t whose entries have standard deviations ``noise_sd`` (scalar or m x n).

    Returns (panel, factor_panel).
    """
    rng = np.random.default_rng(seed)
    F = simulate(theta_f, T, burn_in=burn_in, law=law, seed=rng.integers(2**63))
    m, n = R.shape[0], C.shape[0]
    E = rng.standard_normal((T, m, n)) * np.broadcast_to(noise_sd, (m, n))
    X = reconstruct(F, R, C) + E
    return MatrixPanel(X), F
