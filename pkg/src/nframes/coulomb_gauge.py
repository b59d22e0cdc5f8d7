"""Total torsion, Euler-Lagrange residuals and Coulomb gauge constructions.

Torsion fields are stored as arrays ``T[i]`` of shape ``(nr+1, ntheta, n, n)``
with ``i = 0`` for the u-direction and ``i = 1`` for v.  The pair
``(T[0][..., s, t], T[1][..., s, t])`` is the torsion vector of the pair
(s, t) whose divergence and boundary flux make up the Euler-Lagrange system.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .disc_solvers import (PolarGrid, ScalarField, cauchy_P_field, divergence, gradient,
                           laplacian_values, solve_dirichlet_zero, solve_neumann)
from .errors import CompatibilityError, GaugeError, NonConformalError, NotFlatError
from .geometry_core import FundamentalForms, curvature_inequality_margin
from .normal_bundle import (FrameField, NormalCurvature, RotationField, TorsionField, expm_so,
                            normal_curvature, rotate_frame, torsion_coefficients)

CONFORMAL_TOL = 1e-8


class IntegrabilityWarning(UserWarning):
    """Torsions are not divergence free enough for reliable integral functions."""


@dataclass
class GaugeResult:
    rotation: RotationField
    frame: FrameField
    torsions: TorsionField
    total_torsion: float
    el_interior_residual: float
    el_boundary_residual: float
    history: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    stagnated: bool = False
    method: str = "neumann"

    def to_dict(self) -> dict:
        return {"method": self.method, "total_torsion": self.total_torsion,
                "el_interior_residual": self.el_interior_residual,
                "el_boundary_residual": self.el_boundary_residual,
                "iterations": self.iterations, "converged": self.converged,
                "stagnated": self.stagnated, "history": [float(h) for h in self.history]}


# ---------------------------------------------------------------------------
# functional and Euler-Lagrange residuals

def _forms_of(source) -> FundamentalForms:
    if isinstance(source, FundamentalForms):
        return source
    if isinstance(source, FrameField):
        return source.forms()
    raise TypeError("expected FundamentalForms or FrameField")


def torsion_density(T: TorsionField, forms) -> np.ndarray:
    """sum over s, t of g^ij T_{s,i}^t T_{s,j}^t W at every node."""
    f = _forms_of(forms)
    gi = f.g_inv
    T0, T1 = T.T
    q = (gi[..., 0, 0] * np.sum(T0 * T0, axis=(-2, -1))
         + 2 * gi[..., 0, 1] * np.sum(T0 * T1, axis=(-2, -1))
         + gi[..., 1, 1] * np.sum(T1 * T1, axis=(-2, -1)))
    return q * f.W


def total_torsion(T: TorsionField, forms, grid: PolarGrid | None = None) -> float:
    grid = grid or T.grid
    return float(grid.integrate(torsion_density(T, forms)))


def _conformal_energy(grid: PolarGrid, T: np.ndarray) -> float:
    return float(grid.integrate(np.sum(T[0] ** 2 + T[1] ** 2, axis=(-2, -1))))


def el_residual(T, grid: PolarGrid | None = None) -> tuple[float, float]:
    """(sup interior |div T^{st}|, sup boundary |T^{st} . nu|) over all pairs."""
    arr = T.T if isinstance(T, TorsionField) else np.asarray(T)
    grid = grid or T.grid
    div = divergence(grid, arr[0], arr[1])
    interior = float(np.max(np.abs(div[grid.interior]), initial=0.0))
    c, s = np.cos(grid.theta), np.sin(grid.theta)
    flux = arr[0][-1] * c[:, None, None] + arr[1][-1] * s[:, None, None]
    return interior, float(np.max(np.abs(flux), initial=0.0))


def _check_conformal(frame: FrameField) -> FundamentalForms:
    forms = frame.forms()
    if forms.conformality_defect >= CONFORMAL_TOL:
        raise NonConformalError(
            f"conformality defect {forms.conformality_defect:.3g} >= {CONFORMAL_TOL:g}; "
            "the Coulomb gauge equations assume conformal parameters")
    return forms


# ---------------------------------------------------------------------------
# n = 2: Neumann route

def _neumann_angle(grid: PolarGrid, t1: np.ndarray, t2: np.ndarray, tol: float) -> np.ndarray:
    f = divergence(grid, t1, t2)
    g = t1[-1] * np.cos(grid.theta) + t2[-1] * np.sin(grid.theta)
    # the discrete data are compatible up to quadrature error; scale the
    # admissible defect with the data and the grid
    scale = 1.0 + np.max(np.abs(f)) + np.max(np.abs(g))
    try:
        phi, _ = solve_neumann(ScalarField(grid, f), g, tol=tol, compat_tol=max(1e-6, 10 * grid.h**2) * scale)
    except CompatibilityError as exc:
        raise CompatibilityError(f"{exc} (grid too coarse?)", exc.defect) from exc
    return phi.values


def coulomb_gauge_n2(start: FrameField, sweeps: int = 3, tol: float = 1e-10) -> GaugeResult:
    """Rotate an n = 2 frame into a Coulomb frame via one Neumann problem.

    The angle phi solves Laplace(phi) = div T, d(phi)/dnu = T . nu, and the
    frame is rotated by -phi, so T becomes T - grad(phi).  Extra sweeps repeat
    the solve on the remaining FD residual (defect correction).
    """
    if start.n != 2:
        raise GaugeError(f"coulomb_gauge_n2 needs n = 2, got n = {start.n}")
    forms = _check_conformal(start)
    grid = start.grid
    T0 = torsion_coefficients(start)
    t1, t2 = T0.T[0][..., 0, 1], T0.T[1][..., 0, 1]
    psi = np.zeros(grid.shape)
    history = [total_torsion(T0, forms)]
    for _ in range(max(1, sweeps)):
        phi = _neumann_angle(grid, t1 + _grad(grid, psi)[0], t2 + _grad(grid, psi)[1], tol)
        psi = psi - phi
        T = _shifted(T0, grid, psi)
        history.append(total_torsion(T, forms))
    rot = RotationField.from_angle(grid, psi)
    frame = rotate_frame(start, rot)
    T = torsion_coefficients(frame)
    interior, boundary = el_residual(T)
    return GaugeResult(rot, frame, T, total_torsion(T, forms), interior, boundary, history,
                       sweeps, True, False, "neumann")


def _grad(grid, f):
    return gradient(grid, f)


def _shifted(T0: TorsionField, grid: PolarGrid, psi: np.ndarray) -> TorsionField:
    d = gradient(grid, psi)
    T = T0.T.copy()
    for i in range(2):
        T[i][..., 0, 1] += d[i]
        T[i][..., 1, 0] -= d[i]
    return TorsionField(grid, T, T0.W, None, "fd")


def torsion_free_frame(start: FrameField, flat_tol: float = 1e-6) -> FrameField:
    """Parallel frame of a flat n = 2 normal bundle by line integration.

    The angle with phi_u = -T_{1,1}^2, phi_v = -T_{1,2}^2 is integrated along
    rays from the origin (trapezoid rule), then the frame is rotated by it.
    """
    if start.n != 2:
        raise GaugeError(f"torsion_free_frame needs n = 2, got n = {start.n}")
    grid = start.grid
    forms = start.forms()
    S = normal_curvature(forms, metric=True).S12[..., 0, 1]
    sup = float(np.max(np.abs(S)))
    if sup >= flat_tol:
        raise NotFlatError(f"normal bundle is not flat: sup |S_N W| = {sup:.6g} >= {flat_tol:g}", sup)
    T = torsion_coefficients(start)
    t1, t2 = T.T[0][..., 0, 1], T.T[1][..., 0, 1]
    c, s = np.cos(grid.theta), np.sin(grid.theta)
    radial = -(t1 * c + t2 * s)                        # d(phi)/dr along each ray
    half = grid.ntheta // 2
    # value at the origin from the two antipodal innermost nodes
    t1_0 = 0.5 * (t1[0] + np.roll(t1[0], -half))
    t2_0 = 0.5 * (t2[0] + np.roll(t2[0], -half))
    radial0 = -(t1_0 * c + t2_0 * s)
    r = grid.r
    phi = np.zeros(grid.shape)
    phi[0] = 0.5 * r[0] * (radial0 + radial[0])
    for i in range(1, grid.nr + 1):
        phi[i] = phi[i - 1] + 0.5 * (r[i] - r[i - 1]) * (radial[i] + radial[i - 1])
    return rotate_frame(start, RotationField.from_angle(grid, phi))


# ---------------------------------------------------------------------------
# general n: preconditioned descent on SO(n)

def _torsions_from_rotation(grid, R, T0):
    dR = gradient(grid, R)
    Rt = np.swapaxes(R, -1, -2)
    T = np.stack([dR[i] @ Rt + R @ T0[i] @ Rt for i in range(2)])
    return 0.5 * (T - np.swapaxes(T, -1, -2))


def _descent_direction(grid, T, preconditioner: str, tol: float):
    n = T.shape[-1]
    A = np.zeros(grid.shape + (n, n))
    c, s = np.cos(grid.theta), np.sin(grid.theta)
    for a in range(n):
        for b in range(a + 1, n):
            t1, t2 = T[0][..., a, b], T[1][..., a, b]
            if preconditioner == "h1":
                G = -_neumann_angle(grid, t1, t2, tol)
            else:
                G = divergence(grid, t1, t2)
                G[-1] = -(t1[-1] * c + t2[-1] * s)
            A[..., a, b] = G
            A[..., b, a] = -G
    return A


def coulomb_gauge_general(start: FrameField, step: float = 1.0, max_iter: int = 5000,
                          tol: float = 1e-6, preconditioner: str = "h1",
                          min_step: float = 1e-12) -> GaugeResult:
    """Gradient descent of the total torsion over rotation fields R, N -> R N.

    With ``preconditioner="l2"`` the direction per pair is div T inside and
    -T . nu on the boundary ring.  The default ``"h1"`` uses the Sobolev
    gradient of the same first variation: -G with Laplace(G) = div T,
    dG/dnu = T . nu.  Steps are backtracked (halved) until the total torsion
    does not increase; the step is reset after three accepted steps.  The
    run stops early (``stagnated``) once three accepted steps in a row lower
    the energy by no more than roundoff.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if preconditioner not in ("h1", "l2"):
        raise ValueError(f"unknown preconditioner {preconditioner!r}")
    _check_conformal(start)
    grid = start.grid
    n = start.n
    T0 = torsion_coefficients(start).T
    R = np.broadcast_to(np.eye(n), grid.shape + (n, n)).copy()
    T = T0.copy()
    E = _conformal_energy(grid, T)
    history = [E]
    eps = step
    accepted = 0
    stagnated = False
    stalls = 0
    it = 0
    interior, boundary = el_residual(T, grid)
    while max(interior, boundary) >= tol and it < max_iter:
        it += 1
        A = _descent_direction(grid, T, preconditioner, 1e-10)
        while True:
            Rn = expm_so(eps * A) @ R
            Tn = _torsions_from_rotation(grid, Rn, T0)
            En = _conformal_energy(grid, Tn)
            if En <= E:
                break
            eps *= 0.5
            if eps < min_step:
                stagnated = True
                break
        if stagnated:
            break
        # the discrete energy has bottomed out: the remaining EL residual is
        # discretization error, not something further steps can remove
        stalls = stalls + 1 if E - En <= 1e-13 * E else 0
        R, T, E = Rn, Tn, En
        history.append(E)
        accepted += 1
        if accepted % 3 == 0:
            eps = step
        interior, boundary = el_residual(T, grid)
        if stalls >= 3:
            stagnated = True
            break
    rot = RotationField.from_matrices(grid, R)
    frame = rotate_frame(start, rot)
    Tf = torsion_coefficients(frame)
    interior, boundary = el_residual(Tf)
    converged = max(interior, boundary) < tol
    return GaugeResult(rot, frame, Tf, total_torsion(Tf, frame.forms()), interior, boundary,
                       history, it, converged, stagnated, f"descent-{preconditioner}")


def align_constant_rotation(frame: FrameField, reference: FrameField) -> tuple[np.ndarray, FrameField]:
    """Constant R0 in SO(n) minimizing the quadrature of |R0 N - N_ref|^2, and R0 N.

    Coulomb frames are unique only up to such a constant rotation, so
    comparisons between two gauge constructions are made after alignment.
    """
    if frame.grid != reference.grid or frame.n != reference.n:
        raise GaugeError("frames live on different grids or have different codimension")
    w = frame.grid.weights[..., None, None]
    M = np.sum(w * (reference.N @ np.swapaxes(frame.N, -1, -2)), axis=(0, 1))
    U, _, Vt = np.linalg.svd(M)
    D = np.eye(frame.n)
    D[-1, -1] = np.sign(np.linalg.det(U @ Vt))
    R0 = U @ D @ Vt
    rot = RotationField.from_matrices(frame.grid, np.broadcast_to(R0, frame.grid.shape + R0.shape).copy())
    rot = RotationField(rot.grid, rot.R, (np.zeros_like(rot.R), np.zeros_like(rot.R)), None, None, "analytic")
    return R0, rotate_frame(frame, rot)


# ---------------------------------------------------------------------------
# integral functions and the Grassmann system

@dataclass(frozen=True)
class GrassmannField:
    """Integral functions tau^(st) (shape (..., n, n), skew) and derived vectors."""

    grid: PolarGrid
    tau: np.ndarray
    grad_tau: tuple
    S12: np.ndarray | None = None
    mismatch: float = 0.0

    @property
    def n(self) -> int:
        return self.tau.shape[-1]

    def _pairs(self, a):
        i, j = np.triu_indices(self.n, 1)
        return a[..., i, j]

    @property
    def vector(self) -> np.ndarray:
        return self._pairs(self.tau)

    @property
    def delta(self) -> np.ndarray:
        """delta tau^(st) = sum_w det(grad tau^(sw), grad tau^(wt)), stacked over s < t."""
        tu, tv = self.grad_tau
        return self._pairs(tu @ tv - tv @ tu)

    @property
    def S_vector(self) -> np.ndarray | None:
        return None if self.S12 is None else self._pairs(self.S12)


def integral_functions(T: TorsionField, curvature: NormalCurvature | None = None,
                       tol: float = 1e-10) -> GrassmannField:
    """tau^(st) with grad tau = (-T_{s,2}^t, T_{s,1}^t) and tau = 0 on the boundary.

    Each tau solves Laplace(tau) = d_v T_{s,1}^t - d_u T_{s,2}^t with zero
    boundary values.  A gradient mismatch above 1% of |T| (plus h^2) raises an
    IntegrabilityWarning (the frame is not Coulomb enough).
    """
    grid = T.grid
    n = T.n
    tau = np.zeros(grid.shape + (n, n))
    T1, T2 = T.T
    for a in range(n):
        for b in range(a + 1, n):
            d1 = gradient(grid, T1[..., a, b])
            d2 = gradient(grid, T2[..., a, b])
            rhs = d1[1] - d2[0]
            sol, _ = solve_dirichlet_zero(ScalarField(grid, rhs), tol=tol)
            tau[..., a, b] = sol.values
            tau[..., b, a] = -sol.values
    tu, tv = gradient(grid, tau)
    tu = 0.5 * (tu - np.swapaxes(tu, -1, -2))
    tv = 0.5 * (tv - np.swapaxes(tv, -1, -2))
    tnorm = float(np.max(np.abs(T.T), initial=0.0))
    mismatch = float(max(np.max(np.abs(tu + T2), initial=0.0), np.max(np.abs(tv - T1), initial=0.0)))
    # relative test, with an O(h^2) floor for torsions that are themselves discretization error
    if mismatch > 1e-2 * tnorm + grid.h**2:
        warnings.warn(f"integral functions reproduce the torsions only to {mismatch:.3g} "
                      f"(|T| = {tnorm:.3g}); frame is not Coulomb enough", IntegrabilityWarning)
    S12 = None if curvature is None else curvature.S12
    return GrassmannField(grid, tau, (tu, tv), S12, mismatch)


def grassmann_residuals(G: GrassmannField, curvature: NormalCurvature | None = None) -> dict:
    """PDE residual of Laplace(tau) + delta(tau) = S, growth-bound margin and sup |Phi|."""
    grid = G.grid
    S12 = curvature.S12 if curvature is not None else G.S12
    if S12 is None:
        raise ValueError("grassmann_residuals needs the normal curvature")
    i, j = np.triu_indices(G.n, 1)
    S = S12[..., i, j]
    lap = laplacian_values(grid, G.vector)
    mask = grid.interior
    pde = lap + G.delta - S
    tu, tv = G.grad_tau
    gu, gv = tu[..., i, j], tv[..., i, j]
    grad2 = np.sum(gu**2 + gv**2, axis=-1)
    margin = (math.sqrt(max(G.n - 2, 0)) / 2 * grad2 + np.linalg.norm(S, axis=-1)
              - np.linalg.norm(lap, axis=-1))
    tw = 0.5 * (gu + 1j * gv)
    phi = np.sum(tw * tw, axis=-1)
    return {"pde_residual": float(np.max(np.abs(pde[mask]))),
            "growth_margin": float(np.min(margin[mask])),
            "aux_sup": float(np.max(np.abs(phi[mask])))}


def riemann_hilbert_psi(S_field: ScalarField) -> ScalarField:
    """Solution of Psi_wbar = (i/2) S_N W with Re[w Psi] = 0 on the boundary, as P_B[(i/2) S_N W]."""
    vals = 0.5j * np.asarray(S_field.values, dtype=complex)
    return cauchy_P_field(ScalarField(S_field.grid, vals))


def coulomb_psi(T: TorsionField) -> np.ndarray:
    """T_{1,1}^2 - i T_{1,2}^2 of an n = 2 torsion field."""
    return T.T[0][..., 0, 1] - 1j * T.T[1][..., 0, 1]


# ---------------------------------------------------------------------------
# bounds

_RHO_CHOICES = tuple(round(0.1 * k, 1) for k in range(1, 10))


def _l2(grid, a, mask=None):
    q = np.sum(np.abs(a) ** 2, axis=-1) if a.ndim == 3 else np.abs(a) ** 2
    if mask is not None:
        q = np.where(mask, q, 0.0)
    return math.sqrt(max(float(grid.integrate(q)), 0.0))


def bounds_report(result: GaugeResult, curvature: NormalCurvature, G: GrassmannField) -> dict:
    """Both sides of every bound on the total torsion, with measured discrete norms."""
    grid = result.frame.grid
    n = result.frame.n
    i, j = np.triu_indices(n, 1)
    S = curvature.S12[..., i, j]
    Tvec = G.vector
    tu, tv = G.grad_tau
    gradT2 = float(grid.integrate(np.sum(tu[..., i, j] ** 2 + tv[..., i, j] ** 2, axis=-1)))
    T_sup = float(np.max(np.linalg.norm(Tvec, axis=-1)))
    S_sup = float(np.max(np.linalg.norm(S, axis=-1)))
    S_l2 = _l2(grid, S)
    S_l1 = float(grid.integrate(np.linalg.norm(S, axis=-1)))
    TT = result.total_torsion
    out = {"n": n, "total_torsion": TT, "grassmann_sup": T_sup, "grad_grassmann_l2_sq": gradT2,
           "S_sup": S_sup, "S_l2": S_l2}

    k = (n - 2) / (2 * math.pi) * gradT2
    out["wente_upper"] = {"lhs": T_sup, "rhs": k + n * (n - 1) / 8 * S_sup}
    out["poincare_upper"] = {"lhs": T_sup, "rhs": k + math.sqrt(2) * S_sup,
                             "rhs_l2_form": k + math.sqrt(2 / math.pi) * S_l2}
    Cn = min(n * (n - 1) / 8, math.sqrt(2))
    val = math.sqrt(n - 2) / 2 * ((n - 2) / (4 * math.pi) * TT + Cn * S_sup)
    out["smallness_value"] = {"value": val, "satisfied": val < 1}
    out["torsion_sup"] = float(np.max(np.abs(result.torsions.T)))

    # empirical c(p) table in place of the non-constructive Hoelder constant
    if n == 2:
        psi = np.abs(coulomb_psi(result.torsions))
        SW = np.abs(S[..., 0])
        psi_sup = float(np.max(psi))
        table = {}
        for name, norm in (("4", float(grid.integrate(SW**4)) ** 0.25), ("inf", float(np.max(SW)))):
            c = psi_sup / norm if norm > 0 else float("nan")
            table[name] = {"S_norm": norm, "c": c, "upper": 2 * math.pi * psi_sup**2}
        out["total_torsion_upper_c_alpha_style"] = {"lhs": TT, "psi_sup": psi_sup, "c_p": table}
    else:
        out["total_torsion_upper_c_alpha_style"] = {"applicable": False}

    if n == 2 or T_sup <= 2 / math.sqrt(n - 2):
        denom = 2 - math.sqrt(n - 2) * T_sup
        out["small_solution_upper"] = {"lhs": 2 * gradT2, "rhs": 4 * T_sup * S_l1 / denom, "applicable": True}
    else:
        out["small_solution_upper"] = {"applicable": False}

    out["lower_bound"] = _lower_bound(grid, S, S_sup, S_l2, n, TT)
    forms = result.frame.forms()
    out["curvature_inequality_margin"] = float(np.min(curvature_inequality_margin(forms, curvature.S12)))
    return out


def _lower_bound(grid, S, S_sup, S_l2, n, TT) -> dict:
    if S_l2 < 1e-12:
        return {"applicable": False, "reason": "curvature vector vanishes identically"}
    dS = gradient(grid, S)
    gradS2 = float(grid.integrate(np.sum(dS[0] ** 2 + dS[1] ** 2, axis=-1)))
    if gradS2 <= 0:
        return {"applicable": False, "reason": "curvature vector has zero gradient"}
    rho = None
    for r in _RHO_CHOICES:
        inner = _l2(grid, S, grid.R < r)
        if inner >= 0.5 * S_l2:
            rho = r
            break
    if rho is None:
        rho = _RHO_CHOICES[-1]
        inner = _l2(grid, S, grid.R < rho)
    s_in = inner**2
    general = s_in / (math.sqrt(n - 2) * S_sup + S_l2**2 / ((1 - rho) ** 2 * s_in) + 2 * gradS2 / s_in)
    codim2 = s_in / (S_l2**2 / (2 * (1 - rho) ** 2 * s_in) + gradS2 / s_in)
    return {"applicable": True, "rho": rho, "value": general, "variant_codim2": codim2,
            "total_torsion": TT, "holds": general <= TT}
