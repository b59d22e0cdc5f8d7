"""Immersions of the closed unit disc given as jet evaluators.

Every surface is written once as a formula in ``(u, v)``.  Evaluated on
plain arrays it gives positions; evaluated on :class:`~nframes.jets.Jet`
variables it gives exact partial derivatives.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import jets as jt
from .errors import ConfigError, DomainError
from .jets import Jet

JET_ORDER = 3

_DERIV_NAMES = {
    "X_u": (1, 0), "X_v": (0, 1),
    "X_uu": (2, 0), "X_uv": (1, 1), "X_vv": (0, 2),
    "X_uuu": (3, 0), "X_uuv": (2, 1), "X_uvv": (1, 2), "X_vvv": (0, 3),
}


@dataclass(frozen=True)
class ImmersionSpec:
    """A surface X: closed unit disc -> R^(n+2) with metadata.

    ``position(u, v)`` returns the stacked coordinates (last axis n+2) and
    accepts arrays or jets.  ``spanning(u, v, X)`` returns n vectors spanning
    the normal space, where X is the position jet; when absent, ambient basis
    vectors e_3..e_(n+2) projected off the tangent plane are used.
    """

    name: str
    codimension: int
    position: Callable
    conformal_claim: bool
    params: dict = field(default_factory=dict)
    spanning: Callable | None = None

    @property
    def ambient_dim(self) -> int:
        return self.codimension + 2

    def jet(self, u, v, order: int = JET_ORDER) -> Jet:
        """Position jet at the points (u, v), vectorized."""
        uj, vj = Jet.variables(u, v, order)
        return self.position(uj, vj)

    def describe(self) -> dict:
        return {"name": self.name, "params": self.params}


@dataclass(frozen=True)
class JetSample:
    point: tuple[float, float]
    X: np.ndarray
    X_u: np.ndarray
    X_v: np.ndarray
    X_uu: np.ndarray
    X_uv: np.ndarray
    X_vv: np.ndarray
    X_uuu: np.ndarray
    X_uuv: np.ndarray
    X_uvv: np.ndarray
    X_vvv: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.X] + [getattr(self, k) for k in _DERIV_NAMES])


def _check_point(point, slack: float = 1e-12) -> tuple[float, float]:
    u, v = (float(point[0]), float(point[1]))
    if not (np.isfinite(u) and np.isfinite(v)) or u * u + v * v > 1.0 + slack:
        raise DomainError(f"point ({u}, {v}) lies outside the closed unit disc")
    return u, v


def evaluate_jet(spec: ImmersionSpec, point) -> JetSample:
    u, v = _check_point(point)
    x = spec.jet(u, v, JET_ORDER)
    vals = {k: x.deriv(*ab) for k, ab in _DERIV_NAMES.items()}
    sample = JetSample(point=(u, v), X=x.value, **vals)
    if not np.all(np.isfinite(sample.as_array())):
        raise DomainError(f"non-finite jet for {spec.name} at ({u}, {v})")
    return sample


def fd_jet_oracle(spec: ImmersionSpec, point, step: float) -> JetSample:
    """Jet from position evaluations only.

    Each partial uses tensor products of five-point Fornberg weights, centred
    when the whole stencil fits in the closed disc and one-sided (pointing
    inward) along an axis where it does not.
    """
    from .disc_solvers import fd_weights

    if step < 1e-10:
        raise ValueError(f"step {step:g} is below the cancellation guard 1e-10")
    u, v = _check_point(point)
    h = step
    centred = np.arange(-2, 3)

    def fits(au, av):
        uu = u + h * au[:, None]
        vv = v + h * av[None, :]
        return np.all(uu**2 + vv**2 <= 1.0 + 1e-12)

    inward_u = -np.sign(u or 1.0) * np.arange(5)
    inward_v = -np.sign(v or 1.0) * np.arange(5)
    for au, av in ((centred, centred), (centred, inward_v), (inward_u, centred), (inward_u, inward_v)):
        if fits(au, av):
            break
    else:
        raise DomainError(f"no FD stencil of step {h:g} fits in the disc at ({u}, {v})")
    vals = np.stack([np.stack([np.asarray(spec.position(np.float64(u + a * h), np.float64(v + b * h)),
                                          dtype=float) for b in av]) for a in au])
    wu = [fd_weights(au * h, 0.0, m) for m in range(4)]
    wv = [fd_weights(av * h, 0.0, m) for m in range(4)]

    def d(p, q):
        return np.einsum("a,b,abk->k", wu[p], wv[q], vals)

    return JetSample((u, v), d(0, 0), d(1, 0), d(0, 1), d(2, 0), d(1, 1), d(0, 2),
                     d(3, 0), d(2, 1), d(1, 2), d(0, 3))


# ---------------------------------------------------------------------------
# catalog

def _clifford(params: dict) -> ImmersionSpec:
    _no_params("clifford", params)
    s = 1.0 / np.sqrt(2.0)

    def position(u, v):
        return jt.stack([s * jt.cos(u), s * jt.sin(u), s * jt.cos(v), s * jt.sin(v)])

    def spanning(u, v, X):
        # the torsion-free frame; second vector oriented so det(X_u, X_v, N_1, N_2) > 0
        n1 = jt.stack([s * jt.cos(u), s * jt.sin(u), s * jt.cos(v), s * jt.sin(v)])
        n2 = jt.stack([s * jt.cos(u), s * jt.sin(u), -s * jt.cos(v), -s * jt.sin(v)])
        return [n1, n2]

    return ImmersionSpec("clifford", 2, position, True, {}, spanning)


def _complex_poly(coeffs, u, v):
    """Real and imaginary parts of sum_k c_k w^k with w = u + iv."""
    re = 0.0 * u
    im = 0.0 * u
    pr, pi = 1.0 + 0.0 * u, 0.0 * u
    for k, (a, b) in enumerate(coeffs):
        if k > 0:
            pr, pi = pr * u - pi * v, pr * v + pi * u
        if a:
            re = re + a * pr
            im = im + a * pi
        if b:
            re = re - b * pi
            im = im + b * pr
    return re, im


def _parse_complex_coeffs(raw, name):
    try:
        coeffs = []
        for c in raw:
            if isinstance(c, (int, float)):
                coeffs.append((float(c), 0.0))
            else:
                a, b = c
                coeffs.append((float(a), float(b)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: coefficients must be numbers or [re, im] pairs") from exc
    if not coeffs:
        raise ConfigError(f"{name}: empty coefficient list")
    return coeffs


def _holomorphic_graph(params: dict) -> ImmersionSpec:
    _allowed("holomorphic_graph", params, {"coeffs"})
    raw = params.get("coeffs", [0, 0, 1])
    coeffs = _parse_complex_coeffs(raw, "holomorphic_graph")

    def position(u, v):
        phi, psi = _complex_poly(coeffs, u, v)
        return jt.stack([u, v, phi, psi])

    def spanning(u, v, X):
        xu, xv = X.diff(0), X.diff(1)
        one = Jet.constant(np.ones(xu.shape[:-1]), xu.order)
        zero = 0.0 * one
        return [jt.stack([-xu[..., 2], -xv[..., 2], one, zero]),
                jt.stack([-xu[..., 3], -xv[..., 3], zero, one])]

    return ImmersionSpec("holomorphic_graph", 2, position, True, {"coeffs": [list(c) for c in coeffs]}, spanning)


def _real_poly(terms, u, v):
    out = 0.0 * u
    for a, b, c in terms:
        out = out + c * (u ** int(a)) * (v ** int(b))
    return out


def _graph(params: dict) -> ImmersionSpec:
    _allowed("graph", params, {"z"})
    raw = params.get("z", [[], []])
    try:
        heights = [[(int(a), int(b), float(c)) for a, b, c in poly] for poly in raw]
    except (TypeError, ValueError) as exc:
        raise ConfigError("graph: z must be a list of [[a, b, coeff], ...] monomial lists") from exc
    if len(heights) < 1 or any(a < 0 or b < 0 for poly in heights for a, b, _ in poly):
        raise ConfigError("graph: need at least one height function with non-negative exponents")
    n = len(heights)

    def position(u, v):
        return jt.stack([u, v] + [_real_poly(p, u, v) for p in heights])

    def spanning(u, v, X):
        # Euler normals (-grad z_s, e_s), orthonormalized downstream
        xu, xv = X.diff(0), X.diff(1)
        one = Jet.constant(np.ones(xu.shape[:-1]), xu.order)
        out = []
        for s in range(n):
            comps = [-xu[..., 2 + s], -xv[..., 2 + s]] + [one if t == s else 0.0 * one for t in range(n)]
            out.append(jt.stack(comps))
        return out

    conformal = all(not p for p in heights)
    return ImmersionSpec("graph", n, position, conformal, {"z": [[list(t) for t in p] for p in heights]}, spanning)


def _inverse_stereographic(y):
    """Conformal map R^m -> unit sphere of R^(m+1)."""
    comps = [y[..., k] for k in range(y.shape[-1])]
    q = 0.0 * comps[0]
    for c in comps:
        q = q + c * c
    d = 1.0 + q
    return jt.stack([2.0 * c / d for c in comps] + [(q - 1.0) / d])


def _stereographic_push(y, nu):
    """Differential of the inverse stereographic map at y applied to nu."""
    q = jt.dot(y, y)
    yn = jt.dot(y, nu)
    d = 1.0 + q
    m = y.shape[-1]
    comps = [2.0 * nu[..., k] / d - 4.0 * y[..., k] * yn / (d * d) for k in range(m)]
    return jt.stack(comps + [4.0 * yn / (d * d)])


def _spherical(params: dict) -> ImmersionSpec:
    _allowed("spherical", params, {"codimension", "scale", "shift", "radius"})
    n = int(params.get("codimension", 2))
    if n not in (2, 3):
        raise ConfigError("spherical: codimension must be 2 or 3")
    scale = float(params.get("scale", 0.7))
    rho = float(params.get("radius", 1.0))
    shift = params.get("shift", [0.3, -0.2, 0.1] if n == 2 else [0.2, -0.1, 0.3, 0.1])
    shift = [float(c) for c in shift]
    if len(shift) != n + 1:
        raise ConfigError(f"spherical: shift must have {n + 1} entries")
    if scale <= 0 or rho <= 0:
        raise ConfigError("spherical: scale and radius must be positive")

    def base(u, v):
        if n == 2:
            b = [rho * jt.cos(u / rho), rho * jt.sin(u / rho), v]
        else:
            b = [u, v, u * u - v * v, 2.0 * u * v]
        return jt.stack([scale * c + t for c, t in zip(b, shift)])

    def position(u, v):
        # conformal base map into R^(n+1), then onto the unit sphere
        return _inverse_stereographic(base(u, v))

    def spanning(u, v, X):
        # the position vector, and base normals pushed forward by the stereographic map
        y = base(u, v)
        if n == 2:
            zero = 0.0 * u
            normals = [jt.stack([jt.cos(u / rho), jt.sin(u / rho), zero])]
        else:
            one, zero = 1.0 + 0.0 * u, 0.0 * u
            normals = [jt.stack([-2.0 * u, 2.0 * v, one, zero]), jt.stack([-2.0 * v, -2.0 * u, zero, one])]
        return [X.truncate(u.order)] + [_stereographic_push(y, nu) for nu in normals]

    return ImmersionSpec("spherical", n, position, True,
                         {"codimension": n, "scale": scale, "shift": shift, "radius": rho}, spanning)


def _veronese(params: dict) -> ImmersionSpec:
    _allowed("veronese", params, {"lam", "theta_center", "theta_half", "phi_center", "phi_half"})
    lam = float(params.get("lam", 1.0))
    tc = float(params.get("theta_center", np.pi / 2))
    ta = float(params.get("theta_half", 0.9))
    pc = float(params.get("phi_center", 0.8))
    pa = float(params.get("phi_half", 1.0))
    if not (0 < tc - ta and tc + ta < np.pi):
        raise ConfigError("veronese: theta range must avoid the poles")
    r3 = np.sqrt(3.0)

    def position(u, v):
        th = tc + ta * u
        ph = pc + pa * v
        x = r3 * jt.sin(th) * jt.cos(ph)
        y = r3 * jt.sin(th) * jt.sin(ph)
        z = r3 * jt.cos(th)
        return jt.stack([lam * y * z / r3, lam * x * z / r3, lam * x * y / r3,
                         lam * (x * x - y * y) / (2 * r3), lam * (x * x + y * y - 2 * z * z) / 6.0])

    def spanning(u, v, X):
        # position (normal to the sphere) and two second derivatives; the
        # surface is minimal in its sphere with isotropic second form, so
        # their normal parts span the rest of the normal space everywhere
        o = u.order
        uh, vh = Jet.variables(u.value, v.value, o + 2)
        Y = position(uh, vh)
        yu = Y.diff(0)
        return [Y.truncate(o), yu.diff(0), yu.diff(1)]

    return ImmersionSpec("veronese", 3, position, False,
                         {"lam": lam, "theta_center": tc, "theta_half": ta,
                          "phi_center": pc, "phi_half": pa}, spanning)


def _parallel_type(params: dict) -> ImmersionSpec:
    _allowed("parallel_type", params, {"base", "f", "g"})
    base_name = params.get("base", "clifford")
    if base_name == "parallel_type":
        raise ConfigError("parallel_type: base cannot itself be parallel_type")
    base = builtin_surface(base_name, {})
    if base.codimension != 2:
        raise ConfigError("parallel_type: base surface must have codimension 2")
    f = float(params.get("f", 0.1))
    g = float(params.get("g", 0.05))

    def position(u, v):
        if isinstance(u, Jet):
            order = u.order
            uu, vv = u.value, v.value
        else:
            order = 0
            uu, vv = np.asarray(u, float), np.asarray(v, float)
        from .normal_bundle import surface_and_frame_jets
        xb, nb = surface_and_frame_jets(base, uu, vv, order + 1)
        if order == 0:
            return xb.value + f * nb.value[..., 0, :] + g * nb.value[..., 1, :]
        return xb.truncate(order) + f * nb[..., 0, :] + g * nb[..., 1, :]

    def spanning(u, v, X):
        from .normal_bundle import surface_and_frame_jets
        nb = surface_and_frame_jets(base, u.value, v.value, u.order + 1)[1]
        return [nb[..., 0, :], nb[..., 1, :]]

    return ImmersionSpec("parallel_type", 2, position, False, {"base": base_name, "f": f, "g": g}, spanning)


def _enneper_r5(params: dict) -> ImmersionSpec:
    _allowed("enneper_r5", params, {"scale", "c"})
    a = float(params.get("scale", 0.6))
    c = float(params.get("c", 0.8))
    if a <= 0:
        raise ConfigError("enneper_r5: scale must be positive")

    def position(u, v):
        # real part of the null curve (w - w^3/3, i(w + w^3/3), w^2, c w, i c w)
        u, v = a * u, a * v
        return jt.stack([u - (u * u * u - 3.0 * u * v * v) / 3.0,
                         -v - (3.0 * u * u * v - v * v * v) / 3.0,
                         u * u - v * v, c * u, -c * v])

    return ImmersionSpec("enneper_r5", 3, position, True, {"scale": a, "c": c})


def _no_params(name, params):
    _allowed(name, params, set())


def _allowed(name, params, keys):
    if not isinstance(params, dict):
        raise ConfigError(f"{name}: params must be an object")
    extra = set(params) - set(keys)
    if extra:
        raise ConfigError(f"{name}: unknown parameter(s) {sorted(extra)}")


CATALOG = {
    "clifford": (_clifford, "flat torus (1/sqrt2)(cos u, sin u, cos v, sin v) in R^4; no parameters"),
    "holomorphic_graph": (_holomorphic_graph,
                          "graph (w, Phi(w)) in R^4; coeffs: polynomial coefficients [re, im] of Phi, "
                          "lowest degree first (default w^2)"),
    "graph": (_graph, "graph (u, v, z_1, ..., z_n); z: list of [[a, b, c], ...] monomials c u^a v^b"),
    "spherical": (_spherical, "conformal surface on the unit sphere; codimension (2|3), scale, shift, radius"),
    "veronese": (_veronese, "Veronese surface chart in R^5; lam, theta_center, theta_half, phi_center, phi_half"),
    "enneper_r5": (_enneper_r5, "minimal Enneper-type surface in R^5 with curved normal bundle; scale, c"),
    "parallel_type": (_parallel_type, "X + f N_1 + g N_2 over a codimension-2 base; base, f, g"),
}


def builtin_surface(name: str, params: dict | None = None) -> ImmersionSpec:
    if name not in CATALOG:
        raise ConfigError(f"unknown surface {name!r}; known: {sorted(CATALOG)}")
    return CATALOG[name][0](dict(params or {}))


def list_surfaces() -> str:
    return "\n".join(f"{name}: {desc}" for name, (_, desc) in CATALOG.items())
