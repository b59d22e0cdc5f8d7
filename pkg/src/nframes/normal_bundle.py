"""Normal frames, torsion coefficients, rotations and normal curvature."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import jets as jt
from .disc_solvers import PolarGrid, gradient
from .errors import FrameError, GaugeError, NonConformalError
from .geometry_core import FundamentalForms, _forms_from_arrays, normal_curvature_tensor
from .jets import Jet
from .surface_catalog import JET_ORDER, ImmersionSpec

ORTHO_TOL = 1e-10
DEGENERACY_TOL = 1e-8


# ---------------------------------------------------------------------------
# frame construction on jets

def surface_and_frame_jets(spec: ImmersionSpec, u, v, order: int = JET_ORDER):
    """Position jet of the given order and the normal frame jet one order lower.

    The frame (shape ``(..., n, n+2)``) comes from the spec's spanning set, or
    from e_3..e_(n+2) when the spec ships none, projected off the tangent plane
    and Gram-Schmidt orthonormalized in a fixed order.  The last normal is
    flipped where needed so that det(X_u, X_v, N_1, ..., N_n) > 0.
    """
    uj, vj = Jet.variables(u, v, order)
    X = spec.position(uj, vj)
    lo = order - 1
    xu, xv = X.diff(0), X.diff(1)
    n = spec.codimension
    if spec.spanning is not None:
        ul, vl = Jet.variables(u, v, lo)
        span = [s.truncate(lo) for s in spec.spanning(ul, vl, X)]
    else:
        basis = np.eye(n + 2)
        span = [Jet.constant(np.broadcast_to(basis[k], xu.shape), lo) for k in _ambient_choice(spec)]
    if len(span) != n:
        raise FrameError(f"{spec.name}: spanning set has {len(span)} vectors, expected {n}")

    g11, g12, g22 = jt.dot(xu, xu), jt.dot(xu, xv), jt.dot(xv, xv)
    det = g11 * g22 - g12 * g12
    i11, i12, i22 = g22 / det, -g12 / det, g11 / det
    frame = []
    for k, s in enumerate(span):
        a, b = jt.dot(s, xu), jt.dot(s, xv)
        cu, cv = i11 * a + i12 * b, i12 * a + i22 * b
        s = s - _scale(cu, xu) - _scale(cv, xv)
        for e in frame:
            s = s - _scale(jt.dot(s, e), e)
        norm = jt.sqrt(jt.dot(s, s))
        bad = ~(norm.value > DEGENERACY_TOL)
        if np.any(bad):
            idx = np.argwhere(np.atleast_1d(bad))[0]
            uu = np.broadcast_to(np.asarray(u, float), bad.shape)
            vv = np.broadcast_to(np.asarray(v, float), bad.shape)
            at = (float(uu[tuple(idx)]), float(vv[tuple(idx)])) if bad.ndim else (float(u), float(v))
            raise FrameError(f"{spec.name}: near-degenerate spanning vector {k + 1} at (u, v) = {at}")
        frame.append(_scale(1.0 / norm, s))
    N = jt.stack(frame, axis=-2)
    mat = np.concatenate([np.stack([xu.value, xv.value], axis=-2), N.value], axis=-2)
    sign = np.where(np.linalg.det(mat) < 0, -1.0, 1.0)
    if np.any(sign < 0):
        c = N.c.copy()
        c[..., n - 1, :] *= sign[..., None]
        N = Jet(c, lo)
    return X, N


_PROBE = tuple((r * np.cos(t), r * np.sin(t)) for r in (0.0, 0.5, 1.0)
               for t in np.linspace(0, 2 * np.pi, 12, endpoint=False))


def _ambient_choice(spec: ImmersionSpec) -> tuple[int, ...]:
    """Ambient basis vectors to project when a spec ships no spanning set.

    e_3..e_(n+2) unless their tangent-free parts become nearly dependent
    somewhere on a fixed probe set of the disc; then the subset with the best
    worst-case Gram determinant.  The choice depends only on the spec, so it
    is the same on every grid and at every node.
    """
    from itertools import combinations

    n = spec.codimension
    u = np.array([p[0] for p in _PROBE])
    v = np.array([p[1] for p in _PROBE])
    X = spec.jet(u, v, 1)
    T = np.stack([X.deriv(1, 0), X.deriv(0, 1)], axis=-2)
    q, _ = np.linalg.qr(np.swapaxes(T, -1, -2))
    P = np.eye(n + 2) - q @ np.swapaxes(q, -1, -2)

    def score(idx):
        V = P[..., list(idx)]
        return float(np.min(np.linalg.det(np.swapaxes(V, -1, -2) @ V)))

    default = tuple(range(2, n + 2))
    if score(default) > 1e-2:
        return default
    return max(combinations(range(n + 2), n), key=score)


def _scale(a, x):
    """Scalar field a times vector field x (last axis)."""
    if isinstance(a, Jet):
        a = Jet(a.c[..., None], a.order)
    else:
        a = np.asarray(a)[..., None]
    return a * x


def frame_jet(spec: ImmersionSpec, u, v, order: int = JET_ORDER - 1) -> Jet:
    return surface_and_frame_jets(spec, u, v, order + 1)[1]


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class FrameField:
    """Normal frame sampled on a polar grid.

    ``N`` has shape ``(nr+1, ntheta, n, n+2)`` (rows N_sigma).  Derivatives
    come from ``jet`` when present, else from ``dN`` if supplied, else by FD.
    ``surface`` is the position jet at the nodes (order 3).
    """

    grid: PolarGrid
    surface: Jet
    N: np.ndarray
    jet: Jet | None = None
    dN: tuple | None = None
    path: str = "analytic"
    name: str = ""

    @property
    def n(self) -> int:
        return self.N.shape[-2]

    def derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        if self.jet is not None:
            return self.jet.deriv(1, 0), self.jet.deriv(0, 1)
        if self.dN is not None:
            return self.dN
        return self.fd_derivatives()

    def fd_derivatives(self) -> tuple[np.ndarray, np.ndarray]:
        return gradient(self.grid, self.N)

    def with_fd_derivatives(self) -> "FrameField":
        return replace(self, jet=None, dN=None, path="fd")

    @property
    def tangents(self) -> tuple[np.ndarray, np.ndarray]:
        return self.surface.deriv(1, 0), self.surface.deriv(0, 1)

    def forms(self) -> FundamentalForms:
        s = self.surface
        return _forms_from_arrays(s.deriv(1, 0), s.deriv(0, 1), s.deriv(2, 0), s.deriv(1, 1),
                                  s.deriv(0, 2), self.N)

    def defects(self) -> dict:
        xu, xv = self.tangents
        N = self.N
        gram = np.einsum("...sk,...tk->...st", N, N) - np.eye(self.n)
        tang = np.abs(np.einsum("...sk,...ik->...si", N, np.stack([xu, xv], axis=-2)))
        mat = np.concatenate([np.stack([xu, xv], axis=-2), N], axis=-2)
        return {"orthonormality": float(np.max(np.abs(gram))),
                "normality": float(np.max(tang)),
                "min_det": float(np.min(np.linalg.det(mat)))}

    def check(self) -> None:
        d = self.defects()
        if d["orthonormality"] > ORTHO_TOL or d["normality"] > ORTHO_TOL or not d["min_det"] > 0:
            raise FrameError(f"invalid frame: {d}")

    def to_rows(self):
        g = self.grid
        flat = self.N.reshape(g.shape + (-1,))
        return [[g.R[i, j], g.TH[i, j], g.u[i, j], g.v[i, j], *flat[i, j]]
                for i in range(g.shape[0]) for j in range(g.shape[1])]


@dataclass(frozen=True)
class TorsionField:
    """T[i] (i = 0 for u, 1 for v) with shape (nr+1, ntheta, n, n), stored skew."""

    grid: PolarGrid
    T: np.ndarray
    W: np.ndarray | None = None
    jet: Jet | None = None
    path: str = "analytic"

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        object.__setattr__(self, "T", 0.5 * (T - np.swapaxes(T, -1, -2)))

    @property
    def n(self) -> int:
        return self.T.shape[-1]

    def entry(self, i: int, sigma: int, theta: int) -> np.ndarray:
        """T_{sigma,i}^theta with 1-based indices."""
        return self.T[i - 1][..., sigma - 1, theta - 1]

    def derivatives(self):
        """dT[i][k] = d_k T_i, analytic from the jet when available."""
        if self.jet is not None and self.jet.order >= 1:
            return [[_skew(self.jet[i].deriv(1, 0)), _skew(self.jet[i].deriv(0, 1))] for i in range(2)]
        return [list(gradient(self.grid, self.T[i])) for i in range(2)]

    def vector_field(self, sigma: int, theta: int) -> tuple[np.ndarray, np.ndarray]:
        """The pair (T_{sigma,1}^theta, T_{sigma,2}^theta), 1-based."""
        return self.T[0][..., sigma - 1, theta - 1], self.T[1][..., sigma - 1, theta - 1]


def _skew(a):
    return 0.5 * (a - np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class RotationField:
    """R per node with derivatives dR = (R_u, R_v); optional generator A."""

    grid: PolarGrid
    R: np.ndarray
    dR: tuple | None = None
    A: np.ndarray | None = None
    jet: Jet | None = None
    path: str = "analytic"

    @property
    def n(self) -> int:
        return self.R.shape[-1]

    def derivatives(self):
        if self.jet is not None:
            return self.jet.deriv(1, 0), self.jet.deriv(0, 1)
        if self.dR is not None:
            return self.dR
        return gradient(self.grid, self.R)

    def check(self) -> None:
        R = self.R
        orth = float(np.max(np.abs(R @ np.swapaxes(R, -1, -2) - np.eye(self.n))))
        det = float(np.max(np.abs(np.linalg.det(R) - 1.0)))
        if orth > 1e-12 * max(1, self.n) * 10 or det > 1e-10:
            raise GaugeError(f"rotation field is not in SO(n): |RR^t - I| = {orth:.3g}, |det R - 1| = {det:.3g}")

    @classmethod
    def identity(cls, grid: PolarGrid, n: int) -> "RotationField":
        R = np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy()
        z = np.zeros_like(R)
        return cls(grid, R, (z, z.copy()), np.zeros_like(R))

    @classmethod
    def from_angle(cls, grid: PolarGrid, phi: np.ndarray, dphi=None) -> "RotationField":
        """n = 2 rotation [[cos, sin], [-sin, cos]] by the angle field phi.

        This shifts T_{1,i}^2 by d_i phi.  Derivatives use the FD gradient of
        phi unless ``dphi`` is given.
        """
        phi = np.asarray(phi, dtype=float)
        if dphi is None:
            dphi = gradient(grid, phi)
            path = "fd"
        else:
            path = "analytic"
        c, s = np.cos(phi), np.sin(phi)
        R = np.stack([np.stack([c, s], -1), np.stack([-s, c], -1)], -2)
        dRdphi = np.stack([np.stack([-s, c], -1), np.stack([-c, -s], -1)], -2)
        dR = tuple(np.asarray(d)[..., None, None] * dRdphi for d in dphi)
        A = np.stack([np.stack([0 * phi, phi], -1), np.stack([-phi, 0 * phi], -1)], -2)
        return cls(grid, R, dR, A, None, path)

    @classmethod
    def from_generator(cls, grid: PolarGrid, generator) -> "RotationField":
        """R = exp(A(u, v)); ``generator(u, v)`` maps jets to a skew matrix jet (..., n, n)."""
        uj, vj = Jet.variables(grid.u, grid.v, 2)
        A = generator(uj, vj)
        if not isinstance(A, Jet):
            A = Jet.constant(np.broadcast_to(A, grid.shape + np.shape(A)[-2:]), 2)
        if np.max(np.abs(A.value + np.swapaxes(A.value, -1, -2))) > 1e-12:
            raise GaugeError("generator is not skew-symmetric")
        Rj = expm_so(A)
        return cls(grid, Rj.value, None, A.value, Rj, "analytic")

    @classmethod
    def from_matrices(cls, grid: PolarGrid, R: np.ndarray, A: np.ndarray | None = None) -> "RotationField":
        return cls(grid, np.asarray(R, float), None, A, None, "fd")


# ---------------------------------------------------------------------------
# exponential on so(n)

def _matmul(a, b):
    return jt.einsum("...ij,...jk->...ik", a, b)


def random_rotation_field(grid: PolarGrid, n: int, rng: np.random.Generator, scale: float = 1.0) -> RotationField:
    """Smooth SO(n) field exp(A) with A bilinear in (u, v), coefficients drawn from ``rng``."""
    def generator(u, v):
        zero = 0.0 * u
        A = [[zero] * n for _ in range(n)]
        for s in range(n):
            for t in range(s + 1, n):
                a, b, c, d = scale * rng.normal(size=4)
                A[s][t] = a + b * u + c * v + d * u * v
                A[t][s] = -1.0 * A[s][t]
        return jt.stack([jt.stack(row) for row in A], axis=-2)
    return RotationField.from_generator(grid, generator)


def expm_so(A):
    """Matrix exponential of skew matrices (arrays or jets, last two axes).

    Scaling and squaring with a degree-8 Taylor polynomial; the scaled norm is
    at most 1/8 so the truncation error is below 1e-14.
    """
    val = A.value if isinstance(A, Jet) else np.asarray(A, float)
    n = val.shape[-1]
    norm = float(np.max(np.abs(val).sum(axis=-1))) if val.size else 0.0
    s = max(0, int(np.ceil(np.log2(norm / 0.125)))) if norm > 0.125 else 0
    B = A * (0.5**s)
    eye = np.broadcast_to(np.eye(n), val.shape)
    E = eye + 0.0 * B
    term = eye + 0.0 * B
    for k in range(1, 9):
        term = _matmul(term, B) * (1.0 / k)
        E = E + term
    for _ in range(s):
        E = _matmul(E, E)
    return E


# ---------------------------------------------------------------------------
# operations

def euler_gram_schmidt_frame(spec: ImmersionSpec, grid: PolarGrid) -> FrameField:
    X, N = surface_and_frame_jets(spec, grid.u, grid.v, JET_ORDER)
    frame = FrameField(grid, X, N.value, N, None, "analytic", spec.name)
    frame.check()
    return frame


def torsion_coefficients(frame: FrameField) -> TorsionField:
    W = frame.forms().W
    if frame.jet is not None:
        Nj = frame.jet
        Tj = [jt.einsum("...sk,...tk->...st", Nj.diff(i), Nj.truncate(Nj.order - 1)) for i in range(2)]
        Tj = Jet(np.stack([t.c for t in Tj], axis=1), Tj[0].order)
        T = Tj.value
        return TorsionField(frame.grid, T, W, Tj, "analytic")
    dN = frame.derivatives()
    T = np.stack([np.einsum("...sk,...tk->...st", d, frame.N) for d in dN])
    return TorsionField(frame.grid, T, W, None, frame.path)


def _check_same_grid(a, b):
    if a.grid != b.grid:
        raise GaugeError("rotation field and frame live on different grids")


def rotate_frame(frame: FrameField, rot: RotationField) -> FrameField:
    _check_same_grid(frame, rot)
    if rot.n != frame.n:
        raise GaugeError(f"rotation of size {rot.n} for a frame with {frame.n} normals")
    rot.check()
    N = rot.R @ frame.N
    if frame.jet is not None and rot.jet is not None:
        Nj = _matmul(rot.jet, frame.jet)
        return FrameField(frame.grid, frame.surface, N, Nj, None, "analytic", frame.name)
    dN0 = frame.derivatives()
    dR = rot.derivatives()
    dN = tuple(dR[i] @ frame.N + rot.R @ dN0[i] for i in range(2))
    path = "analytic" if (frame.path == "analytic" and rot.path == "analytic") else "fd"
    return FrameField(frame.grid, frame.surface, N, None, dN, path, frame.name)


def transform_torsions(T: TorsionField, rot: RotationField) -> TorsionField:
    _check_same_grid(T, rot)
    R = rot.R
    Rt = np.swapaxes(R, -1, -2)
    if T.jet is not None and rot.jet is not None:
        lo = min(rot.jet.order - 1, T.jet.order)
        Rj = rot.jet.truncate(lo + 1)
        R0, Rt0 = Rj.truncate(lo), jt.swap_last(Rj.truncate(lo))
        out = [_matmul(Rj.diff(i), Rt0) + _matmul(_matmul(R0, T.jet[i].truncate(lo)), Rt0) for i in range(2)]
        Tj = Jet(np.stack([o.c for o in out], axis=1), out[0].order)
        return TorsionField(T.grid, Tj.value, T.W, Tj, "analytic")
    dR = rot.derivatives()
    Tn = np.stack([dR[i] @ Rt + R @ T.T[i] @ Rt for i in range(2)])
    path = "analytic" if (T.path == "analytic" and rot.path == "analytic") else "fd"
    return TorsionField(T.grid, Tn, T.W, None, path)


@dataclass(frozen=True)
class NormalCurvature:
    S12: np.ndarray          # (..., n, n) skew
    W: np.ndarray
    route: str = "forms"

    @property
    def n(self) -> int:
        return self.S12.shape[-1]

    @property
    def S_N(self) -> np.ndarray | None:
        if self.n != 2:
            return None
        return self.S12[..., 0, 1] / self.W

    @property
    def vector(self) -> np.ndarray:
        """Normal curvature vector, components S_{s,12}^w / W for s < w in lexicographic order."""
        iu = np.triu_indices(self.n, 1)
        return self.S12[..., iu[0], iu[1]] / self.W[..., None]

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.vector**2, axis=-1))

    @property
    def skew_defect(self) -> float:
        return float(np.max(np.abs(self.S12 + np.swapaxes(self.S12, -1, -2)), initial=0.0))


def normal_curvature(source, W=None, *, metric: bool = False, conformal_tol: float = 1e-8) -> NormalCurvature:
    """Normal curvature from second fundamental forms or from torsions.

    With forms, the conformal-parameter formula is used and non-conformal
    input is rejected unless ``metric=True`` (general metric contraction).
    With a TorsionField, S = d_v T_1 - d_u T_2 + T_1 T_2 - T_2 T_1.
    """
    if isinstance(source, FundamentalForms):
        if not metric and source.conformality_defect >= conformal_tol:
            raise NonConformalError(
                f"conformality defect {source.conformality_defect:.3g} >= {conformal_tol:g}; "
                "use metric=True or the torsion route (parametrization dependent)")
        if metric:
            S = normal_curvature_tensor(source)
        else:
            L = source.L
            W_ = source.W[..., None, None]
            d = (L[..., 0, 0] - L[..., 1, 1])
            S = (d[..., :, None] * L[..., None, :, 0, 1] - d[..., None, :] * L[..., :, None, 0, 1]) / W_
        return NormalCurvature(S, source.W, "forms")
    if isinstance(source, TorsionField):
        W = source.W if W is None else W
        if W is None:
            raise ValueError("torsion route needs the area element W")
        dT = source.derivatives()
        T1, T2 = source.T
        S = dT[0][1] - dT[1][0] + T1 @ T2 - T2 @ T1
        analytic = source.jet is not None and source.jet.order >= 1
        return NormalCurvature(_skew(S), W, "torsion-" + ("analytic" if analytic else "fd"))
    raise TypeError("normal_curvature expects FundamentalForms or TorsionField")


def wedge(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    m = x.shape[-1]
    if m < 2:
        raise ValueError("wedge needs vectors of dimension >= 2")
    i, j = np.triu_indices(m, 1)
    return x[..., i] * y[..., j] - x[..., j] * y[..., i]
