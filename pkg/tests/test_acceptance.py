"""Acceptance criteria 1-13, one or more checks each.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
PASS/FAIL line per criterion.
"""
import math
import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from nframes import jets as jt
from nframes.coulomb_gauge import (align_constant_rotation, bounds_report, coulomb_gauge_general,
                                   coulomb_gauge_n2, el_residual, grassmann_residuals, integral_functions,
                                   riemann_hilbert_psi, total_torsion)
from nframes.disc_solvers import PolarGrid, ScalarField, green_kernel_abs_integral
from nframes.geometry_core import (curvature_inequality_margin, curvatures, fundamental_forms,
                                   integrability_residuals, normal_curvature_tensor)
from nframes.normal_bundle import (RotationField, euler_gram_schmidt_frame, normal_curvature,
                                   random_rotation_field, rotate_frame, torsion_coefficients)
from nframes.surface_catalog import CATALOG, builtin_surface, evaluate_jet

from conftest import euler_frame, grid

TT_W2 = 2 * math.pi * (math.log(5) - 0.8)
FLAT_EXTENSION = {"z": [[[2, 0, 1], [0, 2, -1]], [[1, 1, 2]], []]}


def l2(g, a):
    return math.sqrt(float(g.integrate(a**2)))


def block_l2(g, Ta, Tb):
    d = [Ta[i][..., 0, 1] - Tb[i][..., 0, 1] for i in range(2)]
    return math.sqrt(float(g.integrate(d[0] ** 2 + d[1] ** 2)))


def w2_closed_form(g):
    W = 1 + 4 * g.R**2
    return W, 4 * g.v / W, -4 * g.u / W


def uv_rotation(g):
    return RotationField.from_angle(g, g.u * g.v, (g.v, g.u))


@lru_cache(maxsize=None)
def w2_gauged(nr):
    f = euler_frame("holomorphic_graph", nr)
    return f, coulomb_gauge_n2(f)


# -- 1 -----------------------------------------------------------------------

def test_criterion_01_clifford_torsion_free():
    t0 = time.perf_counter()
    g = PolarGrid(64, 128)
    f = euler_gram_schmidt_frame(builtin_surface("clifford"), g)
    T = torsion_coefficients(f)
    forms = f.forms()
    K = curvatures(forms).K
    tt = total_torsion(T, forms)
    elapsed = time.perf_counter() - t0
    assert T.path == "analytic"
    assert np.max(np.abs(T.T)) <= 1e-10
    assert np.max(np.abs(K)) <= 1e-10
    assert tt <= 1e-8
    assert elapsed < 5.0


# -- 2 -----------------------------------------------------------------------

def test_criterion_02_euler_frame_total_torsion():
    f = euler_frame("holomorphic_graph", 128)
    tt = total_torsion(torsion_coefficients(f), f.forms())
    assert abs(tt - TT_W2) <= 0.01 * TT_W2


@pytest.mark.parametrize("fd", [False, True], ids=["analytic", "fd"])
def test_criterion_02_euler_frame_el_residual(fd):
    # The Euler torsions are purely azimuthal and the discrete polar divergence
    # annihilates such fields, so the interior residual sits at roundoff on
    # every grid.  The doubling ratio is only meaningful above that floor.
    res = []
    for nr in (32, 64, 128):
        f = euler_frame("holomorphic_graph", nr)
        res.append(el_residual(torsion_coefficients(f.with_fd_derivatives() if fd else f)))
    floor = 1e-10
    for (i0, b0), (i1, b1) in zip(res, res[1:]):
        assert b1 <= 1e-10
        assert i1 <= floor or i0 / i1 >= 3.5
    for nr, (interior, _) in zip((32, 64, 128), res):
        assert interior <= (1.0 / nr) ** 2


# -- 3 -----------------------------------------------------------------------

def test_criterion_03_gauge_recovery():
    nr = 128
    g = grid(nr)
    f = euler_frame("holomorphic_graph", nr)
    _, Tu, Tv = w2_closed_form(g)
    rotated = rotate_frame(f, uv_rotation(g))
    tt_rot = total_torsion(torsion_coefficients(rotated), rotated.forms())
    res = coulomb_gauge_n2(rotated)
    T = res.torsions.T
    err = math.sqrt(float(g.integrate((T[0][..., 0, 1] - Tu) ** 2 + (T[1][..., 0, 1] - Tv) ** 2)))
    assert err <= 5 * g.h**2
    drop = tt_rot - res.total_torsion
    assert abs(drop - math.pi) <= 0.02 * math.pi


def test_criterion_03_minimality_against_random_angles():
    nr = 64
    g = grid(nr)
    f, res = w2_gauged(nr)
    base = res.total_torsion
    rng = np.random.default_rng(20240)
    for _ in range(20):
        rotated = rotate_frame(res.frame, random_rotation_field(g, 2, rng, scale=0.5))
        assert total_torsion(torsion_coefficients(rotated), f.forms()) >= base - 1e-9


# -- 4 -----------------------------------------------------------------------

def _sin_rotation(g):
    def gen(u, v):
        a = jt.sin(u * v + u)
        return jt.stack([jt.stack([0 * u, a]), jt.stack([-1.0 * a, 0 * u])], axis=-2)
    return RotationField.from_generator(g, gen)


@pytest.mark.parametrize("name", ["clifford", "spherical"])
@pytest.mark.parametrize("nr", [32, 64])
def test_criterion_04_flat_bundle_gauges_to_parallel(name, nr):
    g = grid(nr)
    f = euler_frame(name, nr)
    rng = np.random.default_rng(nr)
    for rot in (_sin_rotation(g), random_rotation_field(g, 2, rng)):
        res = coulomb_gauge_n2(rotate_frame(f, rot))
        assert np.max(np.abs(res.torsions.T)) <= max(10 * g.h**2, 1e-6)


# -- 5 -----------------------------------------------------------------------

def test_criterion_05_integral_function():
    nr = 128
    g = grid(nr)
    f, res = w2_gauged(nr)
    nc = normal_curvature(f.forms())
    G = integral_functions(res.torsions, nc)
    tau = G.tau[..., 0, 1]
    assert abs(g.origin_value(tau) + 0.5 * math.log(5)) <= 1e-3
    bound = 0.25 * np.max(np.abs(nc.S12[..., 0, 1]))
    assert np.max(np.abs(tau)) <= bound
    assert bound <= 2.0 + 1e-12


# -- 6 -----------------------------------------------------------------------

@pytest.mark.parametrize("w", [0.0, 0.3, 0.6, 0.9])
def test_criterion_06_green_kernel(w):
    assert abs(green_kernel_abs_integral(w) - (1 - w * w) / 4) <= 1e-3


# -- 7 -----------------------------------------------------------------------

def test_criterion_07_riemann_hilbert():
    nr = 128
    g = grid(nr)
    f = euler_frame("holomorphic_graph", nr)
    S = normal_curvature(f.forms()).S12[..., 0, 1]
    psi = riemann_hilbert_psi(ScalarField(g, S)).values
    exact = 4j * np.conj(g.z) / (1 + 4 * g.R**2)
    mask = g.R <= 0.9
    assert np.max(np.abs(psi - exact)[mask]) <= 2e-2


# -- 8 -----------------------------------------------------------------------

@pytest.mark.parametrize("name,n", [("holomorphic_graph", 2), ("enneper_r5", 3)])
def test_criterion_08_gauge_invariance(name, n):
    g = grid(32)
    f = euler_frame(name, 32)
    assert f.n == n
    ref = normal_curvature(torsion_coefficients(f)).magnitude
    assert np.max(ref) > 0.1
    rng = np.random.default_rng(8)
    for _ in range(20):
        rotated = rotate_frame(f, random_rotation_field(g, n, rng))
        T = torsion_coefficients(rotated)
        assert T.path == "analytic"
        assert np.max(np.abs(normal_curvature(T).magnitude - ref)) <= 1e-6


# -- 9 -----------------------------------------------------------------------

@pytest.mark.parametrize("name,params", [("graph", {}), ("clifford", {})])
def test_criterion_09_analytic_residuals(name, params):
    spec = builtin_surface(name, params)
    f = euler_gram_schmidt_frame(spec, grid(32))
    rep = integrability_residuals(spec, f, path="analytic")
    for key in ("gauss_eq", "weingarten", "codazzi_mainardi", "ricci", "egregium"):
        assert rep[key] <= 1e-8, key


def test_criterion_09_fd_residual_convergence():
    spec = builtin_surface("holomorphic_graph")
    reps = []
    for nr in (32, 64):
        f = euler_frame("holomorphic_graph", nr).with_fd_derivatives()
        reps.append(integrability_residuals(spec, f, path="fd"))
    for key in ("gauss_eq", "weingarten", "codazzi_mainardi", "ricci", "egregium"):
        coarse, fine = reps[0][key], reps[1][key]
        assert fine <= 1e-3, key
        assert fine <= 1e-12 or math.log2(coarse / fine) >= 1.9, key


# -- 10 ----------------------------------------------------------------------

@pytest.mark.parametrize("name", sorted(CATALOG))
def test_criterion_10_curvature_inequality_everywhere(name):
    f = euler_frame(name, 32)
    forms = f.forms()
    S12 = normal_curvature_tensor(forms)
    assert np.min(curvature_inequality_margin(forms, S12)) >= -1e-9


def test_criterion_10_equality_at_w2_origin():
    spec = builtin_surface("holomorphic_graph")
    jet = evaluate_jet(spec, (0.0, 0.0))
    frame = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])
    forms = fundamental_forms(jet, frame)
    S12 = normal_curvature_tensor(forms)
    assert abs(S12[0, 1] - 8.0) <= 1e-9
    assert abs(curvature_inequality_margin(forms, S12)[0]) <= 1e-9


# -- 11 ----------------------------------------------------------------------

def _so3_generator(u, v):
    a = 0.7 * u * v + 0.3 * u
    b = 0.5 * jt.sin(u + 2 * v)
    c = u * u - 0.5 * v
    z = 0 * u
    return jt.stack([jt.stack([z, a, b]), jt.stack([-1.0 * a, z, c]), jt.stack([-1.0 * b, -1.0 * c, z])], axis=-2)


def test_criterion_11_general_descent():
    nr = 64
    g = grid(nr)
    start = euler_gram_schmidt_frame(builtin_surface("graph", FLAT_EXTENSION), g)
    rotated = rotate_frame(start, RotationField.from_generator(g, _so3_generator))
    t0 = time.perf_counter()
    res = coulomb_gauge_general(rotated, max_iter=5000, tol=1e-6)
    elapsed = time.perf_counter() - t0
    assert res.converged and res.iterations <= 5000
    assert res.el_interior_residual <= 1e-6
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))
    assert elapsed < 120.0

    _, aligned = align_constant_rotation(res.frame, start)
    T = torsion_coefficients(aligned).T
    _, n2 = w2_gauged(nr)
    assert block_l2(g, T, n2.torsions.T) <= 5 * g.h**2
    third = np.concatenate([T[..., 2, :].ravel(), T[..., :, 2].ravel()])
    assert np.max(np.abs(third)) <= 5 * g.h**2


# -- 12 ----------------------------------------------------------------------

@lru_cache(maxsize=None)
def _grassmann(name, nr):
    f = euler_frame(name, nr)
    res = coulomb_gauge_n2(f) if f.n == 2 else coulomb_gauge_general(f)
    # for n > 2 the curvature components rotate with the frame
    nc = normal_curvature(res.frame.forms())
    G = integral_functions(res.torsions, nc)
    return G, grassmann_residuals(G, nc)


@pytest.mark.parametrize("name", ["holomorphic_graph", "enneper_r5"])
def test_criterion_12_grassmann_system(name):
    coarse, fine = _grassmann(name, 32), _grassmann(name, 64)
    if name == "enneper_r5":
        # genuinely coupled: the quadratic term is not identically zero
        assert np.max(np.abs(fine[0].delta)) > 1e-3
    for G, r in (coarse, fine):
        h2 = G.grid.h ** 2
        assert r["pde_residual"] <= h2
        assert r["growth_margin"] >= -10 * h2
    assert fine[1]["pde_residual"] <= coarse[1]["pde_residual"] / 3.5 or fine[1]["pde_residual"] <= 1e-12


# -- 13 ----------------------------------------------------------------------

def test_criterion_13_lower_bound():
    f, res = w2_gauged(64)
    nc = normal_curvature(f.forms())
    G = integral_functions(res.torsions, nc)
    b = bounds_report(res, nc, G)
    lb = b["lower_bound"]
    assert lb["applicable"]
    assert 0 < lb["value"] <= res.total_torsion
    assert 0 < lb["variant_codim2"] <= res.total_torsion
    assert abs(b["S_sup"] - 8.0) <= 0.05


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
