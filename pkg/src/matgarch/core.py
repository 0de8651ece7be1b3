"""Matrix GARCH domain types, parameter layout and the filtering recursion.

The model for an m x n panel is

    X_t = U_t^{1/2} Z_t V_t^{1/2},
    U_t = y_t S1_t / tr(S1_t),   V_t = S2_t / tr(S2_t),
    S1_t = A0 A0' + A1 X_{t-1} X_{t-1}' A1' + A2 S1_{t-1} A2',
    S2_t = B0 B0' + B1 X_{t-1}' X_{t-1} B1' + B2 S2_{t-1} B2',
    y_t  = w + alpha ||X_{t-1}||^2 + beta y_{t-1},

with A0[0, 0] = B0[0, 0] = 1 and zero initial values. Order (2, 2) adds
second-lag terms A3, A4 (and B3, B4, alpha_2, beta_2).

Time indices are zero-based throughout: state ``t`` is the conditional
quantity for observation ``panel.data[t]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backend import kernels

STRUCTURES = ("full", "diagonal")
DEFAULT_RHO_BAR = 0.999


class DimensionError(ValueError):
    """Raised when array shapes do not match the model dimensions."""


# ---------------------------------------------------------------------------
# Panels
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatrixPanel:
    """An ordered sequence of T real m x n matrices."""

    data: np.ndarray
    time_labels: tuple | None = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise DimensionError(f"panel data must have shape (T, m, n), got {arr.shape}")
        T, m, n = arr.shape
        if T < 1 or m < 1 or n < 1:
            raise DimensionError(f"empty panel with shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("panel contains non-finite entries")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        if self.time_labels is not None:
            labels = tuple(self.time_labels)
            if len(labels) != T:
                raise DimensionError(f"{len(labels)} time labels for {T} observations")
            object.__setattr__(self, "time_labels", labels)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.data.shape[1]

    @property
    def n(self) -> int:
        return self.data.shape[2]

    @property
    def dims(self) -> tuple[int, int]:
        return self.data.shape[1], self.data.shape[2]

    def __len__(self) -> int:
        return self.T

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            labels = None if self.time_labels is None else self.time_labels[idx]
            return MatrixPanel(self.data[idx], labels)
        return self.data[idx]

    def vec(self) -> np.ndarray:
        """Column-stacked vec(X_t) for every t, shape (T, m*n)."""
        return np.swapaxes(self.data, 1, 2).reshape(self.T, -1)

    def demeaned(self) -> MatrixPanel:
        return MatrixPanel(self.data - self.data.mean(axis=0), self.time_labels)


def as_panel(x) -> MatrixPanel:
    return x if isinstance(x, MatrixPanel) else MatrixPanel(np.asarray(x, dtype=float))


def vec_to_matrix(v: np.ndarray, m: int, n: int) -> np.ndarray:
    """Inverse of column stacking for a single vector."""
    return np.asarray(v).reshape(n, m).T


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


def _as_lag_stack(mats, d: int, name: str) -> np.ndarray:
    arr = np.array(mats, dtype=float)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[1:] != (d, d):
        raise DimensionError(f"{name} must be a stack of {d}x{d} matrices, got {arr.shape}")
    return np.ascontiguousarray(arr)


@dataclass(frozen=True, eq=False)
class TraceParams:
    """Scalar GARCH for the trace y_t: intercept w, ARCH and GARCH weights."""

    w: float
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float)).copy()
        beta = np.atleast_1d(np.asarray(self.beta, dtype=float)).copy()
        if not np.isfinite(self.w) or self.w <= 0:
            raise ValueError(f"w must be positive, got {self.w}")
        if np.any(alpha < 0) or np.any(beta < 0) or not np.all(np.isfinite(np.r_[alpha, beta])):
            raise ValueError("alpha and beta must be finite and nonnegative")
        object.__setattr__(self, "w", float(self.w))
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @property
    def persistence(self) -> float:
        return float(self.alpha.sum() + self.beta.sum())


@dataclass(frozen=True, eq=False)
class SideParams:
    """BEKK coefficients for one side (rows with d = m, columns with d = n).

    ``arch[k]`` multiplies the lag-(k+1) outer product and ``garch[k]`` the
    lag-(k+1) state; for order (1, 1) these are A1 and A2.
    """

    A0: np.ndarray
    arch: np.ndarray
    garch: np.ndarray
    structure: str = "diagonal"

    def __post_init__(self):
        A0 = np.array(self.A0, dtype=float)
        if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
            raise DimensionError(f"A0 must be square, got {A0.shape}")
        d = A0.shape[0]
        arch = _as_lag_stack(self.arch, d, "arch")
        garch = _as_lag_stack(self.garch, d, "garch")
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        if not np.all(np.isfinite(A0)) or not np.all(np.isfinite(arch)) or not np.all(np.isfinite(garch)):
            raise ValueError("side parameters must be finite")
        if np.any(np.triu(A0, 1) != 0):
            raise ValueError("A0 must be lower triangular")
        if A0[0, 0] != 1.0:
            raise ValueError("A0[0, 0] must equal 1")
        if np.any(np.diag(A0) < 0):
            raise ValueError("A0 must have a nonnegative diagonal")
        if self.structure == "diagonal":
            off = ~np.eye(d, dtype=bool)
            if np.any(arch[:, off] != 0) or np.any(garch[:, off] != 0):
                raise ValueError("diagonal structure requires zero off-diagonal entries")
        object.__setattr__(self, "A0", np.ascontiguousarray(A0))
        object.__setattr__(self, "arch", arch)
        object.__setattr__(self, "garch", garch)

    @property
    def dim(self) -> int:
        return self.A0.shape[0]

    @property
    def A1(self) -> np.ndarray:
        return self.arch[0]

    @property
    def A2(self) -> np.ndarray:
        return self.garch[0]

    def spectral_radius(self) -> float:
        """rho(sum_k A_k (x) A_k) over every ARCH and GARCH lag matrix."""
        d = self.dim
        K = np.zeros((d * d, d * d))
        for M in (*self.arch, *self.garch):
            K += np.kron(M, M)
        return float(np.max(np.abs(np.linalg.eigvals(K))))


@dataclass(frozen=True, eq=False)
class Theta:
    """Full matrix GARCH parameter bundle."""

    trace: TraceParams
    row: SideParams
    col: SideParams

    def __post_init__(self):
        if self.row.structure != self.col.structure:
            raise ValueError("row and column sides must share a structure")
        orders = {
            (len(self.trace.alpha), len(self.trace.beta)),
            (self.row.arch.shape[0], self.row.garch.shape[0]),
            (self.col.arch.shape[0], self.col.garch.shape[0]),
        }
        if len(orders) != 1:
            raise ValueError(f"inconsistent lag orders {orders}")

    @classmethod
    def build(cls, w, alpha, beta, A0, A1, A2, B0, B1, B2, structure="diagonal",
              A3=None, A4=None, B3=None, B4=None, alpha2=None, beta2=None) -> Theta:
        """Convenience constructor using the A0..A4 / B0..B4 naming."""
        arch_a = [A1] + ([A3] if A3 is not None else [])
        garch_a = [A2] + ([A4] if A4 is not None else [])
        arch_b = [B1] + ([B3] if B3 is not None else [])
        garch_b = [B2] + ([B4] if B4 is not None else [])
        al = [alpha] + ([alpha2] if alpha2 is not None else [])
        be = [beta] + ([beta2] if beta2 is not None else [])
        return cls(TraceParams(w, al, be),
                   SideParams(A0, arch_a, garch_a, structure),
                   SideParams(B0, arch_b, garch_b, structure))

    @property
    def m(self) -> int:
        return self.row.dim

    @property
    def n(self) -> int:
        return self.col.dim

    @property
    def structure(self) -> str:
        return self.row.structure

    @property
    def order(self) -> tuple[int, int]:
        return len(self.trace.alpha), len(self.trace.beta)

    @property
    def layout(self) -> ParamLayout:
        return ParamLayout(self.m, self.n, self.structure, self.order)

    def to_vector(self) -> np.ndarray:
        return self.layout.to_vector(self)

    def kernel_args(self) -> tuple:
        r, c, g = self.row, self.col, self.trace
        return (r.A0, r.arch, r.garch, c.A0, c.arch, c.garch,
                g.w, np.ascontiguousarray(g.alpha), np.ascontiguousarray(g.beta))

    def is_stationary(self, rho_bar: float = DEFAULT_RHO_BAR) -> bool:
        return (self.trace.persistence <= rho_bar
                and self.row.spectral_radius() <= rho_bar
                and self.col.spectral_radius() <= rho_bar)

    def canonical(self) -> Theta:
        """Flip the sign of any ARCH/GARCH matrix whose (0, 0) entry is negative.

        A -> -A leaves every recursion unchanged, so this picks one
        representative of each equivalence class.
        """

        def flip(stack):
            out = stack.copy()
            for k in range(out.shape[0]):
                if out[k, 0, 0] < 0:
                    out[k] = -out[k]
            return out

        return Theta(
            self.trace,
            SideParams(self.row.A0, flip(self.row.arch), flip(self.row.garch), self.structure),
            SideParams(self.col.A0, flip(self.col.arch), flip(self.col.garch), self.structure),
        )

    def to_dict(self) -> dict:
        def side(s):
            return {"A0": s.A0.tolist(), "arch": s.arch.tolist(), "garch": s.garch.tolist()}

        return {
            "m": self.m, "n": self.n, "structure": self.structure, "order": list(self.order),
            "w": self.trace.w, "alpha": self.trace.alpha.tolist(), "beta": self.trace.beta.tolist(),
            "row": side(self.row), "col": side(self.col),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Theta:
        s = d["structure"]
        return cls(TraceParams(d["w"], d["alpha"], d["beta"]),
                   SideParams(d["row"]["A0"], d["row"]["arch"], d["row"]["garch"], s),
                   SideParams(d["col"]["A0"], d["col"]["arch"], d["col"]["garch"], s))


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class ParamLayout:
    """Bijection between a Theta and its flat parameter vector.

    The natural vector is theta = (gamma', delta', zeta')' with
    gamma = (w, alpha_1.., beta_1..), delta = (vech(A0) without A0[0,0],
    A1, A2[, A3, A4]) where each Ak contributes vec(Ak) (full) or diag(Ak)
    (diagonal); zeta is the column-side analogue.
    """

    m: int
    n: int
    structure: str = "diagonal"
    order: tuple[int, int] = (1, 1)

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ValueError(f"structure must be one of {STRUCTURES}")
        q1, q2 = self.order
        if not (1 <= q1 <= 2 and 1 <= q2 <= 2):
            raise ValueError(f"orders up to (2, 2) are supported, got {self.order}")
        if self.m < 1 or self.n < 1:
            raise DimensionError("dimensions must be positive")

    # -- sizes -------------------------------------------------------------
    def side_size(self, d: int) -> int:
        per = d * d if self.structure == "full" else d
        return d * (d + 1) // 2 - 1 + (self.order[0] + self.order[1]) * per

    @property
    def n_gamma(self) -> int:
        return 1 + self.order[0] + self.order[1]

    @property
    def p(self) -> int:
        return self.n_gamma + self.side_size(self.m) + self.side_size(self.n)

    def _side_lags(self):
        """Lag matrices in vector order: (kind, index, label number)."""
        q1, q2 = self.order
        out = []
        for k in range(max(q1, q2)):
            if k < q1:
                out.append(("arch", k, 2 * k + 1))
            if k < q2:
                out.append(("garch", k, 2 * k + 2))
        return out

    def _side_entries(self, d: int):
        """(matrix key, i, j) for every free entry of one side, in order."""
        entries = []
        for j in range(d):
            for i in range(j, d):
                if (i, j) != (0, 0):
                    entries.append(("A0", i, j))
        for kind, k, _ in self._side_lags():
            if self.structure == "full":
                for j in range(d):
                    for i in range(d):
                        entries.append(((kind, k), i, j))
            else:
                for i in range(d):
                    entries.append(((kind, k), i, i))
        return entries

    def names(self) -> list[str]:
        q1, q2 = self.order
        out = ["w"]
        out += ["alpha"] if q1 == 1 else [f"alpha{k + 1}" for k in range(q1)]
        out += ["beta"] if q2 == 1 else [f"beta{k + 1}" for k in range(q2)]
        labels = {(kind, k): num for kind, k, num in self._side_lags()}
        for letter, d in (("A", self.m), ("B", self.n)):
            for key, i, j in self._side_entries(d):
                num = 0 if key == "A0" else labels[key]
                out.append(f"{letter}{num}[{i + 1},{j + 1}]")
        return out

    def inert_mask(self) -> np.ndarray:
        """True for coordinates that cannot affect the likelihood.

        A side of dimension 1 has U_t (or V_t) pinned by the trace
        normalisation, so its BEKK coefficients are unidentified.
        """
        mask = np.zeros(self.p, dtype=bool)
        start = self.n_gamma
        for d in (self.m, self.n):
            size = self.side_size(d)
            if d == 1:
                mask[start:start + size] = True
            start += size
        return mask

    def diag_a0_mask(self) -> np.ndarray:
        """True for the diagonal entries of A0 and B0 (positivity constrained)."""
        mask = np.zeros(self.p, dtype=bool)
        start = self.n_gamma
        for d in (self.m, self.n):
            for pos, (key, i, j) in enumerate(self._side_entries(d)):
                if key == "A0" and i == j:
                    mask[start + pos] = True
            start += self.side_size(d)
        return mask

    # -- natural vector <-> matrices ----------------------------------------
    def _side_to_vec(self, side: SideParams) -> np.ndarray:
        vals = []
        for key, i, j in self._side_entries(side.dim):
            if key == "A0":
                vals.append(side.A0[i, j])
            else:
                kind, k = key
                vals.append(getattr(side, kind)[k, i, j])
        return np.array(vals, dtype=float)

    def _vec_to_side_arrays(self, v: np.ndarray, d: int):
        q1, q2 = self.order
        A0 = np.zeros((d, d))
        A0[0, 0] = 1.0
        arch = np.zeros((q1, d, d))
        garch = np.zeros((q2, d, d))
        for val, (key, i, j) in zip(v, self._side_entries(d)):
            if key == "A0":
                A0[i, j] = val
            elif key[0] == "arch":
                arch[key[1], i, j] = val
            else:
                garch[key[1], i, j] = val
        return A0, arch, garch

    def to_vector(self, theta: Theta) -> np.ndarray:
        if (theta.m, theta.n, theta.structure, theta.order) != (self.m, self.n, self.structure, self.order):
            raise DimensionError("theta does not match this layout")
        g = theta.trace
        return np.concatenate([[g.w], g.alpha, g.beta,
                               self._side_to_vec(theta.row), self._side_to_vec(theta.col)])

    def split(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise DimensionError(f"expected a vector of length {self.p}, got shape {x.shape}")
        q1, _ = self.order
        ng, pa = self.n_gamma, self.side_size(self.m)
        return x[0], x[1:1 + q1], x[1 + q1:ng], x[ng:ng + pa], x[ng + pa:]

    def kernel_args(self, x: np.ndarray) -> tuple:
        """Kernel arguments from a natural vector, without validation."""
        w, alpha, beta, xa, xb = self.split(x)
        A0, Aa, Ag = self._vec_to_side_arrays(xa, self.m)
        B0, Ba, Bg = self._vec_to_side_arrays(xb, self.n)
        return (A0, Aa, Ag, B0, Ba, Bg, float(w),
                np.ascontiguousarray(alpha), np.ascontiguousarray(beta))

    def from_vector(self, x: np.ndarray) -> Theta:
        if not np.all(np.isfinite(x)):
            raise ValueError("parameter vector contains non-finite entries")
        A0, Aa, Ag, B0, Ba, Bg, w, alpha, beta = self.kernel_args(x)
        return Theta(TraceParams(w, alpha, beta),
                     SideParams(A0, Aa, Ag, self.structure),
                     SideParams(B0, Ba, Bg, self.structure))

    def grads_to_vector(self, grads: dict) -> np.ndarray:
        """Map entrywise kernel gradients onto the natural vector."""

        def side(d, G0, Ga, Gg):
            out = []
            for key, i, j in self._side_entries(d):
                if key == "A0":
                    out.append(G0[i, j])
                elif key[0] == "arch":
                    out.append(Ga[key[1], i, j])
                else:
                    out.append(Gg[key[1], i, j])
            return out

        return np.concatenate([
            [grads["w"]], grads["alpha"], grads["beta"],
            side(self.m, grads["A0"], grads["A_arch"], grads["A_garch"]),
            side(self.n, grads["B0"], grads["B_arch"], grads["B_garch"]),
        ])

    # -- unconstrained transform ---------------------------------------------
    # w and diag(A0), diag(B0) via exp; (alpha, beta) via total persistence
    # rho_bar * sigmoid(u0) split by a softmax with the first weight as base;
    # every other entry is left as is.
    def pack(self, theta: Theta | np.ndarray, rho_bar: float = DEFAULT_RHO_BAR) -> np.ndarray:
        x = self.to_vector(theta) if isinstance(theta, Theta) else np.asarray(theta, dtype=float)
        if x.shape != (self.p,) or not np.all(np.isfinite(x)):
            raise DimensionError(f"expected a finite vector of length {self.p}")
        v = x.copy()
        if x[0] <= 0:
            raise ValueError("w must be positive to be packed")
        v[0] = np.log(x[0])
        ab = x[1:self.n_gamma]
        total = ab.sum()
        if np.any(ab <= 0) or total >= rho_bar:
            raise ValueError("ARCH/GARCH weights must be positive with sum below rho_bar to be packed")
        v[1] = _logit(total / rho_bar)
        v[2:self.n_gamma] = np.log(ab[1:]) - np.log(ab[0])
        dmask = self.diag_a0_mask()
        if np.any(x[dmask] <= 0):
            raise ValueError("diagonal of A0/B0 must be positive to be packed")
        v[dmask] = np.log(x[dmask])
        return v

    def unpack_vector(self, v: np.ndarray, rho_bar: float = DEFAULT_RHO_BAR) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.p,):
            raise DimensionError(f"expected a vector of length {self.p}, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("unconstrained vector contains non-finite entries")
        x = v.copy()
        x[0] = np.exp(v[0])
        total = rho_bar * _sigmoid(v[1])
        z = np.concatenate([[0.0], v[2:self.n_gamma]])
        z = np.exp(z - z.max())
        x[1:self.n_gamma] = total * z / z.sum()
        dmask = self.diag_a0_mask()
        x[dmask] = np.exp(v[dmask])
        return x

    def unpack(self, v: np.ndarray, rho_bar: float = DEFAULT_RHO_BAR) -> Theta:
        return self.from_vector(self.unpack_vector(v, rho_bar))

    def jacobian(self, v: np.ndarray, rho_bar: float = DEFAULT_RHO_BAR) -> np.ndarray:
        """d(natural)/d(unconstrained) at v, shape (p, p)."""
        x = self.unpack_vector(v, rho_bar)
        J = np.eye(self.p)
        J[0, 0] = x[0]
        ng = self.n_gamma
        ab = x[1:ng]
        total = ab.sum()
        s = ab / total
        sig = total / rho_bar
        J[1:ng, 1] = total * (1.0 - sig) * s
        for j in range(1, ng - 1):
            col = -total * s * s[j]
            col[j] += total * s[j]
            J[1:ng, 1 + j] = col
        dmask = self.diag_a0_mask()
        idx = np.flatnonzero(dmask)
        J[idx, idx] = x[idx]
        return J


def pack(theta: Theta, rho_bar: float = DEFAULT_RHO_BAR) -> np.ndarray:
    """Map theta to its unconstrained optimisation vector."""
    return theta.layout.pack(theta, rho_bar)


def unpack(v: np.ndarray, dims: tuple[int, int], structure: str = "diagonal",
           order: tuple[int, int] = (1, 1), rho_bar: float = DEFAULT_RHO_BAR) -> Theta:
    """Inverse of :func:`pack`."""
    return ParamLayout(dims[0], dims[1], structure, tuple(order)).unpack(v, rho_bar)


def n_params(m: int, n: int, structure: str = "full", order=(1, 1)) -> int:
    return ParamLayout(m, n, structure, tuple(order)).p


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StatePath:
    """Filtered S1_t, S2_t, y_t with the implied U_t and V_t."""

    S1: np.ndarray
    S2: np.ndarray
    y: np.ndarray

    @property
    def T(self) -> int:
        return self.y.shape[0]

    @property
    def U(self) -> np.ndarray:
        tr = np.trace(self.S1, axis1=1, axis2=2)
        return self.S1 * (self.y / tr)[:, None, None]

    @property
    def V(self) -> np.ndarray:
        tr = np.trace(self.S2, axis1=1, axis2=2)
        return self.S2 / tr[:, None, None]

    def _check(self, t: int) -> int:
        if not -self.T <= t < self.T:
            raise IndexError(f"time index {t} out of range for T={self.T}")
        return t

    def sigma(self, t: int) -> np.ndarray:
        return sigma(self, t)

    def row_cov(self, t: int) -> np.ndarray:
        return conditional_row_cov(self, t)

    def col_cov(self, t: int) -> np.ndarray:
        return conditional_col_cov(self, t)


def _check_dims(panel: MatrixPanel, theta: Theta):
    if panel.dims != (theta.m, theta.n):
        raise DimensionError(f"panel dims {panel.dims} do not match theta dims {(theta.m, theta.n)}")


def filter_path(panel, theta: Theta) -> StatePath:
    """Run the recursion from zero initial values over the whole panel.

    The lag order is taken from ``theta``.
    """
    panel = as_panel(panel)
    _check_dims(panel, theta)
    S1, S2, y = kernels.filter_states(panel.data, *theta.kernel_args())
    tr1 = np.trace(S1, axis1=1, axis2=2)
    tr2 = np.trace(S2, axis1=1, axis2=2)
    if np.any(tr1 <= 1e-300) or np.any(tr2 <= 1e-300):
        raise FloatingPointError("trace of S1 or S2 is numerically zero; degenerate parameters")
    return StatePath(S1, S2, y)


def forecast_state(panel, theta: Theta) -> tuple[np.ndarray, np.ndarray, float]:
    """One-step-ahead (U_{T}, V_{T}, y_{T}) given observations 0..T-1."""
    panel = as_panel(panel)
    _check_dims(panel, theta)
    padded = np.concatenate([panel.data, np.zeros((1, theta.m, theta.n))])
    S1, S2, y = kernels.filter_states(padded, *theta.kernel_args())
    U = S1[-1] * (y[-1] / np.trace(S1[-1]))
    V = S2[-1] / np.trace(S2[-1])
    return U, V, float(y[-1])


def sigma(state: StatePath, t: int) -> np.ndarray:
    """Sigma_t = V_t (x) U_t, the covariance of vec(X_t)."""
    t = state._check(t)
    return np.kron(state.V[t], state.U[t])


def conditional_row_cov(state: StatePath, t: int) -> np.ndarray:
    """E(X_t X_t' | past) = tr(V_t) U_t = U_t."""
    t = state._check(t)
    return np.trace(state.V[t]) * state.U[t]


def conditional_col_cov(state: StatePath, t: int) -> np.ndarray:
    """E(X_t' X_t | past) = tr(U_t) V_t = y_t V_t."""
    t = state._check(t)
    return np.trace(state.U[t]) * state.V[t]


# ---------------------------------------------------------------------------
# Matrix square roots
# ---------------------------------------------------------------------------


def _sym_eig(A: np.ndarray, sym_tol: float, neg_tol: float):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got {A.shape}")
    scale = max(np.linalg.norm(A), 1e-300)
    if np.linalg.norm(A - A.T) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (A + A.T))
    if vals.min() < -neg_tol * scale:
        raise ValueError(f"matrix has a negative eigenvalue {vals.min():.3e}")
    return np.clip(vals, 0.0, None), vecs


def sqrt_psd(A: np.ndarray, sym_tol: float = 1e-10, neg_tol: float = 1e-8) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    vals, vecs = _sym_eig(A, sym_tol, neg_tol)
    return (vecs * np.sqrt(vals)) @ vecs.T


def inv_sqrt_pd(A: np.ndarray, sym_tol: float = 1e-10) -> np.ndarray:
    """Symmetric inverse square root of a positive definite matrix."""
    vals, vecs = _sym_eig(A, sym_tol, 0.0)
    if vals.min() <= 0:
        raise np.linalg.LinAlgError("matrix is singular")
    return (vecs / np.sqrt(vals)) @ vecs.T


def kron_eigenvalues(V: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Sorted eigenvalues of V (x) U from the factors' eigenvalues."""
    return np.sort(np.outer(np.linalg.eigvalsh(V), np.linalg.eigvalsh(U)).ravel())


__all__: Sequence[str] = [
    "MatrixPanel", "TraceParams", "SideParams", "Theta", "ParamLayout", "StatePath",
    "DimensionError", "as_panel", "pack", "unpack", "n_params", "filter_path",
    "forecast_state", "sigma", "conditional_row_cov", "conditional_col_cov",
    "sqrt_psd", "inv_sqrt_pd", "kron_eigenvalues", "vec_to_matrix",
]
