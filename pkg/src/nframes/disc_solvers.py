"""Polar discretization of the closed unit disc and the solvers built on it.

Nodes sit at half-integer radii r_i = (i + 1/2)/nr plus a boundary ring at
r = 1, so no unknown lives at the origin.  Node arrays have shape
``(nr + 1, ntheta, ...)``; row ``nr`` is the boundary ring.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import CompatibilityError, DomainError, SolverError


@dataclass(frozen=True)
class PolarGrid:
    nr: int
    ntheta: int

    def __post_init__(self):
        if self.nr < 8:
            raise ValueError(f"nr must be >= 8, got {self.nr}")
        if self.ntheta < 4 or self.ntheta % 2:
            raise ValueError(f"ntheta must be even and >= 4, got {self.ntheta}")

    @cached_property
    def h(self) -> float:
        return 1.0 / self.nr

    @cached_property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.ntheta

    @cached_property
    def r(self) -> np.ndarray:
        """Node radii, boundary ring last."""
        return np.append((np.arange(self.nr) + 0.5) / self.nr, 1.0)

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arange(self.ntheta) * self.dtheta

    @cached_property
    def shape(self) -> tuple[int, int]:
        return (self.nr + 1, self.ntheta)

    @cached_property
    def node_count(self) -> int:
        return self.nr * self.ntheta + self.ntheta

    @cached_property
    def R(self) -> np.ndarray:
        return np.repeat(self.r[:, None], self.ntheta, axis=1)

    @cached_property
    def TH(self) -> np.ndarray:
        return np.repeat(self.theta[None, :], self.nr + 1, axis=0)

    @cached_property
    def u(self) -> np.ndarray:
        return self.R * np.cos(self.TH)

    @cached_property
    def v(self) -> np.ndarray:
        return self.R * np.sin(self.TH)

    @cached_property
    def z(self) -> np.ndarray:
        return self.u + 1j * self.v

    @cached_property
    def weights(self) -> np.ndarray:
        """Midpoint cell measures r_i dr dtheta; zero on the boundary ring."""
        w = self.R * self.h * self.dtheta
        w[-1] = 0.0
        return w

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[-1] = False
        return mask

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Midpoint quadrature over the leading two (node) axes."""
        values = np.asarray(values)
        w = self.weights.reshape(self.shape + (1,) * (values.ndim - 2))
        return np.sum(values * w, axis=(0, 1))

    def boundary_integral(self, g: np.ndarray) -> float:
        return float(np.sum(g) * self.dtheta)

    def origin_value(self, values: np.ndarray):
        """Value at the origin from the two innermost ring means.

        Ring means of a smooth field are even in r, so a + b r^2 through
        both rings is fourth-order accurate at r = 0.
        """
        m0, m1 = np.mean(values[0], axis=0), np.mean(values[1], axis=0)
        r0, r1 = self.r[0] ** 2, self.r[1] ** 2
        return (r1 * m0 - r0 * m1) / (r1 - r0)

    def to_dict(self) -> dict:
        return {"nr": self.nr, "ntheta": self.ntheta}


@dataclass(frozen=True)
class ScalarField:
    """One value per node (complex values make it a complex field)."""

    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise ValueError(f"field shape {vals.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field has non-finite values")
        object.__setattr__(self, "values", vals)

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    @property
    def boundary(self) -> np.ndarray:
        return self.values[-1]

    def _check(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._check(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._check(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._check(other))

    __rmul__ = __mul__


ComplexField = ScalarField


@dataclass(frozen=True)
class LinearSolveStats:
    iterations: int
    residual: float
    constraint: str
    defect: float = 0.0

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "residual": self.residual,
                "constraint": self.constraint, "defect": self.defect}


# ---------------------------------------------------------------------------
# finite differences

def fd_weights(nodes, x0: float, m: int) -> np.ndarray:
    """Fornberg weights for the m-th derivative at x0 from values at nodes."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, nodes[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5 = 1.0, c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def _across_origin(grid: PolarGrid, row: np.ndarray) -> np.ndarray:
    return np.roll(row, -grid.ntheta // 2, axis=0)


_CENTRED_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_CENTRED_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@lru_cache(maxsize=32)
def _radial_stencils(nr: int) -> tuple:
    """Per-row stencils (rows, d1 weights, d2 weights) in units of h = 1/nr.

    Negative row indices -1, -2 denote ghost rows across the origin
    (row 0 or 1 at theta + pi).  Rows that cannot use the centred five-point
    formula use one-sided weights on the last six rings.
    """
    r = np.append((np.arange(nr) + 0.5) / nr, 1.0)
    h = 1.0 / nr
    out = []
    for i in range(nr + 1):
        if i <= nr - 3:
            rows = tuple(range(i - 2, i + 3))
            out.append((rows, _CENTRED_D1 / h, _CENTRED_D2 / h**2))
        else:
            rows = tuple(range(nr - 5, nr + 1))
            pts = r[list(rows)]
            out.append((rows, fd_weights(pts, r[i], 1), fd_weights(pts, r[i], 2)))
    return tuple(out)


def _row(grid: PolarGrid, f: np.ndarray, k: int) -> np.ndarray:
    return f[k] if k >= 0 else _across_origin(grid, f[-k - 1])


def _radial_derivs(grid: PolarGrid, f: np.ndarray, second: bool = True):
    """Fourth-order radial derivatives at every node (one-sided near r = 1)."""
    f = np.asarray(f)
    nr = grid.nr
    fr = np.empty_like(f)
    frr = np.empty_like(f) if second else None
    m = nr - 2
    h = grid.h
    ext = np.concatenate([np.stack([_row(grid, f, -2), _row(grid, f, -1)]), f], axis=0)
    a = [ext[i:i + m] for i in range(5)]
    fr[:m] = sum(w * x for w, x in zip(_CENTRED_D1, a)) / h
    if second:
        frr[:m] = sum(w * x for w, x in zip(_CENTRED_D2, a)) / h**2
    for i, (rows, w1, w2) in enumerate(_radial_stencils(nr)):
        if i < m:
            continue
        fr[i] = sum(w * f[k] for w, k in zip(w1, rows))
        if second:
            frr[i] = sum(w * f[k] for w, k in zip(w2, rows))
    return fr, frr


def d_r(grid: PolarGrid, f: np.ndarray) -> np.ndarray:
    """Radial derivative at every node."""
    return _radial_derivs(grid, f, second=False)[0]


def d_theta(grid: PolarGrid, f: np.ndarray) -> np.ndarray:
    return (np.roll(f, 2, axis=1) - 8 * np.roll(f, 1, axis=1)
            + 8 * np.roll(f, -1, axis=1) - np.roll(f, -2, axis=1)) / (12 * grid.dtheta)


def _d_theta2(grid: PolarGrid, f: np.ndarray) -> np.ndarray:
    return (-np.roll(f, 2, axis=1) + 16 * np.roll(f, 1, axis=1) - 30 * f
            + 16 * np.roll(f, -1, axis=1) - np.roll(f, -2, axis=1)) / (12 * grid.dtheta**2)


def _bcast(grid: PolarGrid, a: np.ndarray, ndim: int) -> np.ndarray:
    return a.reshape(grid.shape + (1,) * (ndim - 2))


def gradient(grid: PolarGrid, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian partials (f_u, f_v) at every node.

    On the boundary ring the radial component of the gradient is exactly the
    one-sided radial derivative, which the Neumann solver also uses.
    """
    f = np.asarray(f)
    fr, ft = d_r(grid, f), d_theta(grid, f)
    c = _bcast(grid, np.cos(grid.TH), f.ndim)
    s = _bcast(grid, np.sin(grid.TH), f.ndim)
    rr = _bcast(grid, grid.R, f.ndim)
    return c * fr - s * ft / rr, s * fr + c * ft / rr


def divergence(grid: PolarGrid, fu: np.ndarray, fv: np.ndarray) -> np.ndarray:
    return gradient(grid, fu)[0] + gradient(grid, fv)[1]


def curl(grid: PolarGrid, fu: np.ndarray, fv: np.ndarray) -> np.ndarray:
    """d(fv)/du - d(fu)/dv."""
    return gradient(grid, fv)[0] - gradient(grid, fu)[1]


def laplacian_values(grid: PolarGrid, f: np.ndarray) -> np.ndarray:
    """f_rr + f_r/r + f_thth/r^2 with fourth-order stencils.

    Rings next to the origin borrow values across it, so no special origin
    stencil is needed; the boundary ring uses one-sided weights.
    """
    f = np.asarray(f)
    fr, frr = _radial_derivs(grid, f)
    rr = _bcast(grid, grid.R, f.ndim)
    return frr + fr / rr + _d_theta2(grid, f) / rr**2


def quadrature(f: ScalarField) -> float:
    return complex(f.grid.integrate(f.values)) if f.is_complex else float(f.grid.integrate(f.values))


def laplacian_apply(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, laplacian_values(f.grid, f.values))


# ---------------------------------------------------------------------------
# finite-volume operator and conjugate gradients

class _DiscOperator:
    """Symmetric finite-volume Laplacian on the interior cells.

    ``apply`` returns the flux balance of each cell (Laplacian times cell
    measure).  Dirichlet closes the outer face with the half-cell difference
    to a zero boundary value; Neumann closes it with the prescribed flux,
    which enters the right-hand side instead.
    """

    def __init__(self, grid: PolarGrid, kind: str):
        self.grid = grid
        self.kind = kind
        nr, h, dt = grid.nr, grid.h, grid.dtheta
        ri = grid.r[:nr]
        faces = np.arange(nr + 1) * h
        self.rad = faces[1:nr] * dt / h                 # couplings across inner faces
        self.ang = h / (ri * dt)                          # angular couplings per ring
        self.outer = 2.0 * dt / h if kind == "dirichlet" else 0.0
        k = np.fft.rfftfreq(grid.ntheta, d=1.0 / grid.ntheta)
        self.lam = 4.0 * np.sin(k * dt / 2.0) ** 2        # angular symbol (positive)
        diag = np.zeros(nr)
        diag[:-1] += self.rad
        diag[1:] += self.rad
        diag[-1] += self.outer
        self.diag = diag

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Negative flux balance, i.e. a positive semidefinite operator."""
        out = self.diag[:, None] * x
        out[:-1] -= self.rad[:, None] * x[1:]
        out[1:] -= self.rad[:, None] * x[:-1]
        out += self.ang[:, None] * (2 * x - np.roll(x, 1, axis=1) - np.roll(x, -1, axis=1))
        return out

    def solve_exact(self, b: np.ndarray) -> np.ndarray:
        """Direct solve: Fourier in theta, tridiagonal in r."""
        nr = self.grid.nr
        bh = np.fft.rfft(b, axis=1)
        nk = bh.shape[1]
        diag = self.diag[:, None] + self.ang[:, None] * self.lam[None, :]
        off = -self.rad
        xh = np.zeros_like(bh)
        start = np.zeros(nk, dtype=int)
        if self.kind == "neumann":
            start[0] = 1  # pin the first node of the constant mode
        for s in np.unique(start):
            cols = np.nonzero(start == s)[0]
            xh[s:, cols] = _thomas(off[s:], diag[s:, cols], bh[s:, cols])
        return np.fft.irfft(xh, n=self.grid.ntheta, axis=1)


def _thomas(off: np.ndarray, diag: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Symmetric tridiagonal solve, vectorized over columns."""
    n = diag.shape[0]
    c = np.zeros(diag.shape)
    d = np.zeros(rhs.shape, dtype=rhs.dtype)
    c[0] = off[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - off[i - 1] * c[i - 1]
        if i < n - 1:
            c[i] = off[i] / denom
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom
    x = np.zeros_like(d)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _cg(op: _DiscOperator, b: np.ndarray, tol: float, max_iter: int, project: bool,
        precondition: bool) -> tuple[np.ndarray, int, float]:
    def proj(y):
        return y - y.mean() if project else y

    b = proj(b)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0.0:
        return x, 0, 0.0
    r = b.copy()
    z = proj(op.solve_exact(r)) if precondition else r.copy()
    p = z.copy()
    rz = np.vdot(r, z)
    res = 1.0
    for it in range(1, max_iter + 1):
        ap = proj(op.apply(p))
        alpha = rz / np.vdot(p, ap)
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return x, it, res
        z = proj(op.solve_exact(r)) if precondition else r.copy()
        rz_new = np.vdot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not reach tol {tol:g} in {max_iter} iterations (residual {res:.3e})",
                      LinearSolveStats(max_iter, float(res), "mean-zero" if project else "none"))


def _max_iter(grid: PolarGrid) -> int:
    return int(20 * np.sqrt(grid.node_count) * 10)


class _ModalSolver:
    """Direct solver for the fourth-order node Laplacian of ``laplacian_values``.

    The stencil is a tensor product in (r, theta), so each angular Fourier
    mode decouples into a dense radial system (ghost rows across the origin
    pick up the factor (-1)^k).  The boundary row carries either the value
    (Dirichlet) or the one-sided radial derivative used by ``d_r`` (Neumann).
    For the constant Neumann mode the system is bordered with the mean-zero
    constraint and a free constant in the right-hand side.
    """

    def __init__(self, grid: PolarGrid, kind: str):
        self.grid = grid
        self.kind = kind
        nr, dt = grid.nr, grid.dtheta
        k = np.arange(grid.ntheta // 2 + 1)
        lam = (-2 * np.cos(2 * k * dt) + 32 * np.cos(k * dt) - 30) / (12 * dt**2)
        r = grid.r
        self.factors = []
        ring_w = np.append(r[:nr] * grid.h * 2 * np.pi, 0.0)
        # infinity norm of the node operator, for the backward error
        rows = np.zeros(nr + 1)
        for i, (_, w1, w2) in enumerate(_radial_stencils(nr)):
            rows[i] = np.sum(np.abs(w2)) + np.sum(np.abs(w1)) / r[i] + 64.0 / (12 * dt**2 * r[i] ** 2)
            if i == nr:
                rows[i] = 1.0 if kind == "dirichlet" else np.sum(np.abs(w1))
        self.norm = float(np.max(rows))
        for kk, lk in zip(k, lam):
            sign = (-1.0) ** kk
            d1 = np.zeros((nr + 1, nr + 1))
            d2 = np.zeros((nr + 1, nr + 1))
            for i, (rows, w1, w2) in enumerate(_radial_stencils(nr)):
                for row, a, b in zip(rows, w1, w2):
                    col, fac = (row, 1.0) if row >= 0 else (-row - 1, sign)
                    d1[i, col] += fac * a
                    d2[i, col] += fac * b
            m = d2 + d1 / r[:, None] + np.diag(lk / r**2)
            if kind == "dirichlet":
                m[nr] = 0.0
                m[nr, nr] = 1.0
            else:
                m[nr] = d1[nr]
            if kind == "neumann" and kk == 0:
                big = np.zeros((nr + 2, nr + 2))
                big[:nr + 1, :nr + 1] = m
                big[:nr, nr + 1] = 1.0
                big[nr + 1, :nr + 1] = ring_w
                m = big
            self.factors.append(lu_factor(m))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """rhs holds interior values in rows 0..nr-1 and boundary data in row nr."""
        nr = self.grid.nr
        rh = np.fft.rfft(rhs, axis=1)
        out = np.zeros_like(rh)
        for kk, lu in enumerate(self.factors):
            b = rh[:, kk]
            if len(lu[1]) > nr + 1:
                b = np.append(b, 0.0)
            x = lu_solve(lu, b.real) + 1j * lu_solve(lu, b.imag)
            out[:, kk] = x[:nr + 1]
        return np.fft.irfft(out, n=self.grid.ntheta, axis=1)

    def residual_rhs(self, x: np.ndarray) -> np.ndarray:
        out = laplacian_values(self.grid, x)
        out[-1] = x[-1] if self.kind == "dirichlet" else d_r(self.grid, x)[-1]
        return out


@lru_cache(maxsize=8)
def _modal_solver(nr: int, ntheta: int, kind: str) -> _ModalSolver:
    return _ModalSolver(PolarGrid(nr, ntheta), kind)


def _modal_solve(grid: PolarGrid, kind: str, rhs: np.ndarray, tol: float, project: bool):
    """Direct solve plus iterative refinement.

    The reported residual is the normwise backward error
    |r| / (|A| |x| + |b|) in the max norm; the operator norm is dominated by
    the angular stencil on the innermost ring, which sets the roundoff floor
    of any residual evaluation.
    """
    solver = _modal_solver(grid.nr, grid.ntheta, kind)
    scale = float(np.max(np.abs(rhs)))
    x = np.zeros(grid.shape)
    if scale == 0.0:
        return x, 0, 0.0
    # the problem is linear: solve for unit-size data so tiny or huge inputs
    # do not underflow or overflow
    rhs = rhs / scale
    bnorm = 1.0

    def backward_error(x):
        r = rhs - solver.residual_rhs(x)
        if project:
            r[:-1] -= np.sum(r[:-1] * grid.weights[:-1]) / np.pi
        return r, float(np.max(np.abs(r))) / (solver.norm * float(np.max(np.abs(x))) + bnorm)

    for it in range(21):
        r, res = backward_error(x)
        if res <= tol:
            return x * scale, it, res
        if it < 20:
            x = x + solver.solve(r)
    raise SolverError(f"modal solve did not reach tol {tol:g} (backward error {res:.3e})",
                      LinearSolveStats(20, float(res), "mean-zero" if project else "none"))


def solve_dirichlet_zero(f: ScalarField, tol: float = 1e-10, method: str = "modal",
                         precondition: bool = True) -> tuple[ScalarField, LinearSolveStats]:
    """Solve Laplace(phi) = f in B with phi = 0 on the boundary ring.

    ``method="modal"`` (default) solves the fourth-order node stencil of
    ``laplacian_values`` directly, so the computed phi satisfies that
    stencil to solver precision.  ``method="cg"`` runs conjugate gradients on
    the symmetric finite-volume operator instead.
    """
    grid = f.grid
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "cg":
        op = _DiscOperator(grid, "dirichlet")
        b = -np.asarray(f.values[:-1], dtype=float) * grid.weights[:-1]
        x, it, res = _cg(op, b, tol, _max_iter(grid), project=False, precondition=precondition)
        out = np.zeros(grid.shape)
        out[:-1] = x
        return ScalarField(grid, out), LinearSolveStats(it, float(res), "none")
    if method != "modal":
        raise ValueError(f"unknown method {method!r}")
    rhs = np.array(f.values, dtype=float)
    rhs[-1] = 0.0
    x, it, res = _modal_solve(grid, "dirichlet", rhs, tol, project=False)
    x[-1] = 0.0
    return ScalarField(grid, x), LinearSolveStats(it, float(res), "none")


def solve_neumann(f: ScalarField, g: np.ndarray, tol: float = 1e-10,
                  compat_tol: float | None = None, method: str = "modal",
                  precondition: bool = True) -> tuple[ScalarField, LinearSolveStats]:
    """Solve Laplace(phi) = f in B, d(phi)/dnu = g on the boundary, mean(phi) = 0.

    The compatibility defect quad(f) - int(g) must lie within ``compat_tol``;
    an admissible defect is absorbed by a constant shift of f.
    """
    grid = f.grid
    if tol <= 0:
        raise ValueError("tol must be positive")
    fv = np.asarray(f.values, dtype=float)
    g = np.asarray(g, dtype=float).reshape(grid.ntheta)
    defect = grid.integrate(fv) - grid.boundary_integral(g)
    if compat_tol is None:
        compat_tol = 1e-6 * (1.0 + np.max(np.abs(fv)))
    if abs(defect) > compat_tol:
        raise CompatibilityError(
            f"Neumann data incompatible: quad(f) - int(g) = {defect:.6g} exceeds {compat_tol:.3g}",
            float(defect))
    if method == "cg":
        fv = fv - defect / np.pi
        op = _DiscOperator(grid, "neumann")
        b = -fv[:-1] * grid.weights[:-1]
        b[-1] += g * grid.dtheta
        x, it, res = _cg(op, b, tol, _max_iter(grid), project=True, precondition=precondition)
        x -= np.sum(x * grid.weights[:-1]) / np.pi
        out = np.empty(grid.shape)
        out[:-1] = x
        out[-1] = _neumann_boundary_values(grid, x, g)
        return ScalarField(grid, out), LinearSolveStats(it, float(res), "mean-zero", float(defect))
    if method != "modal":
        raise ValueError(f"unknown method {method!r}")
    rhs = fv.copy()
    rhs[-1] = g
    x, it, res = _modal_solve(grid, "neumann", rhs, tol, project=True)
    x -= grid.integrate(x) / np.pi
    return ScalarField(grid, x), LinearSolveStats(it, float(res), "mean-zero", float(defect))


def _neumann_boundary_values(grid: PolarGrid, x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # quadratic through the two outer rings with slope g at r = 1
    h = grid.h
    a1, a2 = x[-1], x[-2]
    c = (g * h - (a1 - a2)) / (2 * h**2)
    return a1 + g * h / 2 - c * h**2 / 4


# ---------------------------------------------------------------------------
# Green kernel

def green_kernel(zeta, w):
    """Green function of the disc, (1/2pi) log|(zeta - w)/(1 - conj(w) zeta)|."""
    return np.log(np.abs((zeta - w) / (1 - np.conj(w) * zeta))) / (2 * np.pi)


def green_kernel_abs_integral(w: complex, n_angle: int = 512, n_radial: int = 64) -> float:
    """Integral of |green_kernel(., w)| over B.

    Uses polar coordinates centred at w.  The kernel is non-positive, and its
    singular part rho*log(rho) is integrated in closed form along each ray; the
    smooth remainder uses Gauss-Legendre nodes.
    """
    w = complex(w)
    if abs(w) > 1 + 1e-12:
        raise DomainError(f"|w| = {abs(w):.6g} > 1")
    if abs(w) >= 1 - 1e-14:
        return 0.0
    alpha = np.arange(n_angle) * 2 * np.pi / n_angle
    e = np.exp(1j * alpha)
    proj = np.real(np.conj(w) * e)
    rho_max = -proj + np.sqrt(proj**2 + 1 - abs(w) ** 2)
    singular = rho_max**2 / 2 * (np.log(rho_max) - 0.5)
    x, wt = np.polynomial.legendre.leggauss(n_radial)
    rho = (x[None, :] + 1) / 2 * rho_max[:, None]
    zeta = w + rho * e[:, None]
    smooth = np.sum(wt[None, :] * rho * np.log(np.abs(1 - np.conj(w) * zeta)), axis=1) * rho_max / 2
    ray = singular - smooth
    return float(-np.sum(ray) * (2 * np.pi / n_angle) / (2 * np.pi))


# ---------------------------------------------------------------------------
# Cauchy and Vekua operators

def interpolate(grid: PolarGrid, values: np.ndarray, w: complex):
    """Bilinear interpolation in (r, theta) of a node field at the point w."""
    r, th = abs(w), np.angle(w) % (2 * np.pi)
    nr, nt = grid.nr, grid.ntheta
    jf = th / grid.dtheta
    j0 = int(np.floor(jf)) % nt
    t = jf - np.floor(jf)

    def ring(i, j, tt):
        return (1 - tt) * values[i, j % nt] + tt * values[i, (j + 1) % nt]

    if r < grid.r[0]:
        # along the diameter through the origin
        a = ring(0, j0, t)
        b = ring(0, j0 + nt // 2, t)
        s = (r + grid.r[0]) / (2 * grid.r[0])
        return (1 - s) * b + s * a
    i0 = min(int(np.searchsorted(grid.r, r, side="right")) - 1, nr - 1)
    s = (r - grid.r[i0]) / (grid.r[i0 + 1] - grid.r[i0])
    return (1 - s) * ring(i0, j0, t) + s * ring(i0 + 1, j0, t)


def _check_target(grid: PolarGrid, w: complex):
    if abs(w) > 1 - grid.h + 1e-12:
        raise DomainError(f"|w| = {abs(w):.6g} exceeds 1 - dr = {1 - grid.h:.6g}")


def _cauchy_singular_part(grid: PolarGrid, f: np.ndarray, w: complex) -> complex:
    zeta = grid.z[:-1]
    fw = interpolate(grid, f, w)
    diff = zeta - w
    near = np.abs(diff) < 1e-14 * (1 + abs(w))
    diff = np.where(near, 1.0, diff)
    integrand = np.where(near, 0.0, (f[:-1] - fw) / diff)
    total = np.sum(integrand * grid.weights[:-1])
    return -total / np.pi + fw * np.conj(w)


def cauchy_T(f: ComplexField, w: complex) -> complex:
    """T_B[f](w) = -(1/pi) int f(zeta)/(zeta - w).

    The singularity is subtracted, T_B[f] = T_B[f - f(w)] + f(w) conj(w),
    using T_B[1](w) = conj(w); the remaining integrand is bounded.
    """
    grid = f.grid
    w = complex(w)
    _check_target(grid, w)
    return complex(_cauchy_singular_part(grid, np.asarray(f.values, dtype=complex), w))


def cauchy_P(f: ComplexField, w: complex) -> complex:
    """P_B[f](w): T_B[f](w) minus (1/pi) int conj(zeta) conj(f)/(1 - w conj(zeta))."""
    grid = f.grid
    w = complex(w)
    _check_target(grid, w)
    fv = np.asarray(f.values, dtype=complex)
    zeta = grid.z[:-1]
    reg = np.sum(np.conj(zeta) * np.conj(fv[:-1]) / (1 - w * np.conj(zeta)) * grid.weights[:-1])
    return complex(_cauchy_singular_part(grid, fv, w) - reg / np.pi)


def _ring_convolve(grid: PolarGrid, src: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """out[i, j] = sum_k sum_l src[k, l] kernel[i, k, j - l] (circular in the last index)."""
    s_hat = np.fft.fft(src, axis=1)
    k_hat = np.fft.fft(kernel, axis=2)
    return np.fft.ifft(np.einsum("kq,ikq->iq", s_hat, k_hat), axis=1)


def cauchy_P_field(f: ComplexField) -> ComplexField:
    """P_B[f] at every interior node (same quadrature as ``cauchy_P``).

    Kernels depend on the angle difference only, so the double sum over
    rings reduces to FFT convolutions in theta.
    """
    grid = f.grid
    nr, nt = grid.nr, grid.ntheta
    fv = np.asarray(f.values, dtype=complex)[:-1]
    ri = grid.r[:nr]
    wts = grid.weights[:-1]
    m = np.arange(nt)
    # 1/(zeta_kl - w_ij) = e^{-i theta_j} / (r_k e^{i theta_(l-j)} - r_i); index by j - l
    diff = ri[None, :, None] * np.exp(-1j * m * grid.dtheta)[None, None, :] - ri[:, None, None]
    self_term = np.zeros_like(diff, dtype=bool)
    self_term[np.arange(nr), np.arange(nr), 0] = True
    kern = np.where(self_term, 0.0, 1.0 / np.where(self_term, 1.0, diff))
    phase = np.exp(-1j * grid.theta)[None, :]
    s_f = phase * _ring_convolve(grid, fv * wts, kern)
    s_1 = phase * _ring_convolve(grid, wts.astype(complex), kern)
    wz = grid.z[:-1]
    t_val = -(s_f - fv * s_1) / np.pi + fv * np.conj(wz)
    # 1/(1 - w conj(zeta)) = 1/(1 - r_i r_k e^{i theta_(j-l)})
    kern2 = 1.0 / (1.0 - ri[:, None, None] * ri[None, :, None] * np.exp(1j * m * grid.dtheta)[None, None, :])
    src2 = np.conj(grid.z[:-1]) * np.conj(fv) * wts
    reg = _ring_convolve(grid, src2, kern2)
    out = np.zeros(grid.shape, dtype=complex)
    out[:-1] = t_val - reg / np.pi
    out[-1] = np.nan
    return _masked_field(grid, out)


def _masked_field(grid: PolarGrid, values: np.ndarray) -> ComplexField:
    # boundary ring is outside the operator's domain; store zeros there
    vals = np.where(np.isfinite(values), values, 0.0)
    return ScalarField(grid, vals)
