"""Fundamental forms, Christoffel symbols, curvatures and integrability residuals.

The formulas below are written on components and work unchanged on numpy
arrays and on jets, which is how the analytic residual path differentiates
derived fields (Christoffel symbols, second fundamental forms, torsions).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import jets as jt
from .errors import ImmersionError, FrameError
from .jets import Jet


@dataclass(frozen=True)
class FundamentalForms:
    g: np.ndarray          # (..., 2, 2)
    g_inv: np.ndarray      # (..., 2, 2)
    W: np.ndarray          # (...)
    L: np.ndarray          # (..., n, 2, 2)

    @property
    def codimension(self) -> int:
        return self.L.shape[-3]

    @property
    def conformality_defect(self) -> float:
        g = self.g
        return float(np.max(np.maximum(np.abs(g[..., 0, 0] - g[..., 1, 1]), np.abs(g[..., 0, 1]))))


@dataclass(frozen=True)
class ChristoffelSample:
    gamma: np.ndarray      # gamma[k, i, j] = Gamma^k_ij (0-based indices)

    def __call__(self, k: int, i: int, j: int) -> float:
        """Gamma^k_ij with the 1-based indices used in formulas."""
        return float(self.gamma[k - 1, i - 1, j - 1])


@dataclass(frozen=True)
class CurvatureScalars:
    K_sigma: np.ndarray
    K: np.ndarray
    H_sigma: np.ndarray
    R2112: np.ndarray


@dataclass
class ResidualReport:
    values: dict = field(default_factory=dict)
    path: str = "analytic"

    def __getitem__(self, key):
        return self.values[key]

    def to_dict(self) -> dict:
        return {"path": self.path, **self.values}


# ---------------------------------------------------------------------------
# component formulas (arrays or jets)

def metric(xu, xv):
    """(g11, g12, g22)."""
    return jt.dot(xu, xu), jt.dot(xu, xv), jt.dot(xv, xv)


def inverse_metric(g11, g12, g22):
    det = g11 * g22 - g12 * g12
    return g22 / det, -g12 / det, g11 / det, det


def second_forms(x11, x12, x22, N):
    """L_{sigma,ij} as three arrays of shape (..., n): L11, L12, L22."""
    return (jt.einsum("...k,...sk->...s", x11, N),
            jt.einsum("...k,...sk->...s", x12, N),
            jt.einsum("...k,...sk->...s", x22, N))


def christoffel_components(xd1, xd2):
    """Gamma[k][i][j] from first derivatives xd1[i] and second derivatives xd2[i][j].

    Metric derivatives are expanded as g_ij,k = X_ik . X_j + X_i . X_jk.
    """
    g = [[jt.dot(xd1[i], xd1[j]) for j in range(2)] for i in range(2)]
    gi11, gi12, gi22, _ = inverse_metric(g[0][0], g[0][1], g[1][1])
    ginv = [[gi11, gi12], [gi12, gi22]]
    dg = [[[jt.dot(xd2[i][k], xd1[j]) + jt.dot(xd1[i], xd2[j][k]) for k in range(2)]
           for j in range(2)] for i in range(2)]   # dg[i][j][k] = d_k g_ij
    gam = [[[None, None], [None, None]], [[None, None], [None, None]]]
    for k in range(2):
        for i in range(2):
            for j in range(i, 2):
                s = 0.0
                for l in range(2):
                    s = s + ginv[k][l] * (dg[l][i][j] + dg[j][l][i] - dg[i][j][l])
                gam[k][i][j] = 0.5 * s
                gam[k][j][i] = gam[k][i][j]
    return gam


def riemann_2112(gam, dgam, g):
    """R_2112 from Gamma and its derivatives dgam[k][l][i][j] = d_k Gamma^l_ij.

    R^l_ijk = Gamma^l_ij,k - Gamma^l_ik,j + Gamma^m_ij Gamma^l_mk - Gamma^m_ik Gamma^l_mj,
    lowered with g_ln.
    """
    def R_up(l, i, j, k):
        out = dgam[k][l][i][j] - dgam[j][l][i][k]
        for m in range(2):
            out = out + gam[m][i][j] * gam[l][m][k] - gam[m][i][k] * gam[l][m][j]
        return out

    # R_2112 = g_2l R^l_112 (0-based: n=1, i=0, j=0, k=1)
    return g[1][0] * R_up(0, 0, 0, 1) + g[1][1] * R_up(1, 0, 0, 1)


# ---------------------------------------------------------------------------
# public point operations

def _forms_from_arrays(xu, xv, x11, x12, x22, N) -> FundamentalForms:
    g11, g12, g22 = metric(xu, xv)
    det = g11 * g22 - g12 * g12
    if np.any(~(det > 0)):
        raise ImmersionError("degenerate metric: W <= 0")
    W = np.sqrt(det)
    g = np.stack([np.stack([g11, g12], -1), np.stack([g12, g22], -1)], -2)
    g_inv = np.stack([np.stack([g22, -g12], -1), np.stack([-g12, g11], -1)], -2) / det[..., None, None]
    L11, L12, L22 = second_forms(x11, x12, x22, N)
    L = np.stack([np.stack([L11, L12], -1), np.stack([L12, L22], -1)], -2)
    return FundamentalForms(g, g_inv, W, L)


def fundamental_forms(jet, frame) -> FundamentalForms:
    """Forms at one point from a JetSample and a normal basis (rows N_sigma)."""
    N = np.atleast_2d(np.asarray(frame, dtype=float))
    gram = N @ N.T
    if np.max(np.abs(gram - np.eye(len(N)))) > 1e-10:
        raise FrameError("frame is not orthonormal")
    tang = np.abs(N @ np.stack([jet.X_u, jet.X_v]).T)
    if np.max(tang) > 1e-10 * (1 + np.linalg.norm(jet.X_u) + np.linalg.norm(jet.X_v)):
        raise FrameError("frame is not normal to the surface")
    return _forms_from_arrays(jet.X_u, jet.X_v, jet.X_uu, jet.X_uv, jet.X_vv, N)


def christoffel(jet) -> ChristoffelSample:
    xd1 = [jet.X_u, jet.X_v]
    xd2 = [[jet.X_uu, jet.X_uv], [jet.X_uv, jet.X_vv]]
    g11, g12, g22 = metric(jet.X_u, jet.X_v)
    if not g11 * g22 - g12 * g12 > 0:
        raise ImmersionError("degenerate metric: W <= 0")
    gam = christoffel_components(xd1, xd2)
    return ChristoffelSample(np.array([[[gam[k][i][j] for j in range(2)] for i in range(2)] for k in range(2)],
                                      dtype=float))


def curvatures(forms: FundamentalForms) -> CurvatureScalars:
    L = forms.L
    W2 = (forms.W**2)[..., None]
    K_sigma = (L[..., 0, 0] * L[..., 1, 1] - L[..., 0, 1] ** 2) / W2
    gi = forms.g_inv[..., None, :, :]
    H_sigma = 0.5 * np.sum(gi * L, axis=(-2, -1))
    K = np.sum(K_sigma, axis=-1)
    return CurvatureScalars(K_sigma, K, H_sigma, K * forms.W**2)


def normal_curvature_tensor(forms: FundamentalForms) -> np.ndarray:
    """S_{sigma,12}^omega from the second fundamental forms (any parameters).

    S = sum_{m,k} (L_{sigma,1m} L_{omega,2k} - L_{sigma,2m} L_{omega,1k}) g^{mk};
    in conformal parameters this is the familiar
    (1/W)[(L_s11 - L_s22) L_w12 - (L_w11 - L_w22) L_s12].
    """
    L = forms.L
    gi = forms.g_inv
    a = np.einsum("...sm,...mk,...wk->...sw", L[..., :, 0, :], gi, L[..., :, 1, :])
    return a - np.swapaxes(a, -1, -2)


def curvature_inequality_margin(forms: FundamentalForms, S12: np.ndarray) -> np.ndarray:
    """(2H_s^2 - K_s)W + (2H_w^2 - K_w)W - |S_{s,12}^w| for each pair s < w."""
    cs = curvatures(forms)
    q = (2 * cs.H_sigma**2 - cs.K_sigma) * forms.W[..., None]
    n = q.shape[-1]
    iu = np.triu_indices(n, 1)
    bound = q[..., :, None] + q[..., None, :]
    return (bound - np.abs(S12))[..., iu[0], iu[1]]


# ---------------------------------------------------------------------------
# integrability residuals on a grid

_RESIDUALS = ("gauss_eq", "weingarten", "codazzi_mainardi", "gauss_integrability",
              "ricci", "egregium", "mean_curvature_system")


def _sup(x, mask):
    x = np.abs(np.asarray(x))
    x = x.reshape(x.shape[:2] + (-1,)) if x.ndim > 2 else x[..., None]
    return float(np.max(x[mask]))


def integrability_residuals(spec, frame_field, grid=None, path: str | None = None) -> ResidualReport:
    """Sup over interior nodes of |LHS - RHS| for the structure equations.

    ``path="analytic"`` differentiates Christoffel symbols, second forms and
    torsions through jets; ``path="fd"`` takes those derivatives (and the
    frame derivatives) by finite differences on the grid.
    """
    from .disc_solvers import gradient

    frame = frame_field
    grid = grid or frame.grid
    if path is None:
        path = "analytic" if frame.jet is not None else "fd"
    if path == "analytic" and frame.jet is None:
        raise ValueError("analytic path needs a frame with jets")
    X = frame.surface
    mask = grid.interior
    n = frame.n

    x1, x2 = X.diff(0), X.diff(1)
    x11, x12, x22 = x1.diff(0), x1.diff(1), x2.diff(1)
    xd1 = [x1, x2]
    xd2 = [[x11, x12], [x12, x22]]
    gam_j = christoffel_components(xd1, xd2)                    # jets of order 1
    gam = [[[gam_j[k][i][j].value for j in range(2)] for i in range(2)] for k in range(2)]
    g11, g12, g22 = (a.value for a in metric(x1.truncate(0), x2.truncate(0)))
    gi11, gi12, gi22, det = inverse_metric(g11, g12, g22)
    ginv = [[gi11, gi12], [gi12, gi22]]
    g = [[g11, g12], [g12, g22]]
    W = np.sqrt(det)
    Xd1 = [x1.value, x2.value]
    Xd2 = [[x11.value, x12.value], [x12.value, x22.value]]
    N = frame.N
    Lv = [[np.einsum("...k,...sk->...s", Xd2[i][j], N) for j in range(2)] for i in range(2)]

    if path == "analytic":
        Nj = frame.jet                                         # order >= 2
        dN = [Nj.deriv(1, 0), Nj.deriv(0, 1)]
        Nj1 = Nj.truncate(1)
        Lj = [[jt.einsum("...k,...sk->...s", xd2[i][j], Nj1) for j in range(2)] for i in range(2)]
        dL = [[[Lj[i][j].deriv(*((1, 0) if k == 0 else (0, 1))) for k in range(2)] for j in range(2)]
              for i in range(2)]                                # dL[i][j][k] = d_k L_ij
        Tj = [jt.einsum("...sk,...tk->...st", Nj.diff(i), Nj1) for i in range(2)]
        T = [t.value for t in Tj]
        dT = [[Tj[i].deriv(*((1, 0) if k == 0 else (0, 1))) for k in range(2)] for i in range(2)]
        dgam = [[[[gam_j[l][i][j].deriv(*((1, 0) if k == 0 else (0, 1))) for j in range(2)]
                  for i in range(2)] for l in range(2)] for k in range(2)]
    else:
        dN = list(frame.fd_derivatives())
        T = [np.einsum("...sk,...tk->...st", dN[i], N) for i in range(2)]
        T = [0.5 * (t - np.swapaxes(t, -1, -2)) for t in T]
        dL = [[list(gradient(grid, Lv[i][j])) for j in range(2)] for i in range(2)]
        dT = [list(gradient(grid, T[i])) for i in range(2)]
        dgam_kl = [[[gradient(grid, gam[l][i][j]) for j in range(2)] for i in range(2)] for l in range(2)]
        dgam = [[[[dgam_kl[l][i][j][k] for j in range(2)] for i in range(2)] for l in range(2)] for k in range(2)]

    out = {}
    # Gauss equations: X_ij = Gamma^k_ij X_k + L_sigma,ij N_sigma
    r = 0.0
    for i in range(2):
        for j in range(2):
            rhs = sum(gam[k][i][j][..., None] * Xd1[k] for k in range(2))
            rhs = rhs + np.einsum("...s,...sk->...k", Lv[i][j], N)
            r = max(r, _sup(Xd2[i][j] - rhs, mask))
    out["gauss_eq"] = r

    # Weingarten: N_sigma,i = -L_sigma,ij g^jk X_k + T_sigma,i^theta N_theta
    r = 0.0
    for i in range(2):
        rhs = np.einsum("...st,...tk->...sk", T[i], N)
        for j in range(2):
            for k in range(2):
                rhs = rhs - (Lv[i][j] * ginv[j][k][..., None])[..., None] * Xd1[k][..., None, :]
        r = max(r, _sup(dN[i] - rhs, mask))
    out["weingarten"] = r

    # Codazzi-Mainardi, for i = 1, 2
    r = 0.0
    for i in range(2):
        lhs = dL[i][0][1] + gam[0][i][0][..., None] * Lv[0][1] + gam[1][i][0][..., None] * Lv[1][1]
        lhs = lhs + np.einsum("...w,...ws->...s", Lv[i][0], T[1])
        rhs = dL[i][1][0] + gam[0][i][1][..., None] * Lv[0][0] + gam[1][i][1][..., None] * Lv[1][0]
        rhs = rhs + np.einsum("...w,...ws->...s", Lv[i][1], T[0])
        r = max(r, _sup(lhs - rhs, mask))
    out["codazzi_mainardi"] = r

    # Gauss integrability, for i, l = 1, 2
    r = 0.0
    for i in range(2):
        for l in range(2):
            lhs = dgam[1][l][i][0] - dgam[0][l][i][1]
            for m in range(2):
                lhs = lhs + gam[m][i][0] * gam[l][m][1] - gam[m][i][1] * gam[l][m][0]
            rhs = 0.0
            for m in range(2):
                rhs = rhs + np.sum(Lv[i][0] * Lv[1][m] - Lv[i][1] * Lv[0][m], axis=-1) * ginv[m][l]
            r = max(r, _sup(lhs - rhs, mask))
    out["gauss_integrability"] = r

    # Ricci: S from torsion derivatives equals S from second forms
    S_T = dT[0][1] - dT[1][0] + T[0] @ T[1] - T[1] @ T[0]
    a = 0.0
    for m in range(2):
        for k in range(2):
            a = a + np.einsum("...s,...w->...sw", Lv[0][m], Lv[1][k]) * ginv[m][k][..., None, None]
    S_L = a - np.swapaxes(a, -1, -2)
    out["ricci"] = _sup(S_T - S_L, mask)

    # theorema egregium: R_2112 from Christoffel symbols against K W^2
    R2112 = riemann_2112(gam, dgam, g)
    K = np.sum(Lv[0][0] * Lv[1][1] - Lv[0][1] ** 2, axis=-1) / det
    out["egregium"] = _sup(R2112 - K * det, mask)

    defect = float(np.max(np.maximum(np.abs(g11 - g22), np.abs(g12))[mask]))
    if defect < 1e-8:
        H = 0.5 * (Lv[0][0] * gi11[..., None] + 2 * Lv[0][1] * gi12[..., None] + Lv[1][1] * gi22[..., None])
        rhs = 2 * np.einsum("...s,...sk->...k", H * W[..., None], N)
        out["mean_curvature_system"] = _sup(Xd2[0][0] + Xd2[1][1] - rhs, mask)
    else:
        out["mean_curvature_system"] = "skipped"
    return ResidualReport(out, path)
