import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nframes.disc_solvers import (PolarGrid, ScalarField, cauchy_P, cauchy_P_field, cauchy_T, divergence,
                                  fd_weights, gradient, green_kernel, green_kernel_abs_integral, interpolate,
                                  laplacian_apply, quadrature, solve_dirichlet_zero, solve_neumann)
from nframes.errors import CompatibilityError

from conftest import grid


def field(g, values):
    return ScalarField(g, np.asarray(values, dtype=float) + 0 * g.R)


def test_grid_validation():
    with pytest.raises(ValueError):
        PolarGrid(4, 16)
    with pytest.raises(ValueError):
        PolarGrid(16, 15)
    g = grid(8)
    assert g.shape == (9, 16)
    assert g.r[-1] == 1.0 and np.all(g.weights[-1] == 0)


@pytest.mark.parametrize("f,exact", [(lambda g: 1 + 0 * g.R, math.pi),
                                     (lambda g: g.R**2, math.pi / 2),
                                     (lambda g: 8 / (1 + 4 * g.R**2) ** 2, 8 * math.pi / 5)])
def test_quadrature(f, exact):
    g = grid(128)
    assert quadrature(ScalarField(g, f(g))) == pytest.approx(exact, abs=1e-3)


def test_fd_weights_reproduce_polynomials():
    x = np.array([-0.3, 0.0, 0.1, 0.5, 0.9])
    w = fd_weights(x, 0.2, 2)
    assert w @ (x**2) == pytest.approx(2.0)
    assert w @ x == pytest.approx(0.0, abs=1e-12)


def test_laplacian_apply():
    g = grid(32)
    # zero up to rounding in the stencil sums
    assert np.max(np.abs(laplacian_apply(field(g, 3.5)).values[g.interior])) <= 1e-10
    lap = laplacian_apply(ScalarField(g, g.R**2 - 1)).values[g.interior]
    assert np.max(np.abs(lap - 4)) <= 10 * g.h**2
    assert np.max(np.abs(laplacian_apply(ScalarField(g, g.u)).values[g.interior])) <= 10 * g.h**2


def test_gradient_and_divergence():
    g = grid(32)
    du, dv = gradient(g, g.u**2 * g.v)
    assert np.max(np.abs(du - 2 * g.u * g.v)) <= 1e-3
    assert np.max(np.abs(dv - g.u**2)) <= 1e-3
    div = divergence(g, g.u, g.v)
    # fourth-order angular differences: error ~ dtheta^4
    assert np.max(np.abs(div - 2)) <= g.dtheta**4


def test_dirichlet_manufactured():
    g = grid(32)
    phi, stats = solve_dirichlet_zero(field(g, 4.0))
    assert np.max(np.abs(phi.values - (g.R**2 - 1))) <= 10 * g.h**2
    assert np.all(phi.values[-1] == 0)
    zero, _ = solve_dirichlet_zero(field(g, 0.0))
    assert np.max(np.abs(zero.values)) == 0
    assert stats.residual <= 1e-10


def test_dirichlet_w2_integral_function():
    g = grid(128)
    tau, _ = solve_dirichlet_zero(ScalarField(g, 8 / (1 + 4 * g.R**2) ** 2))
    assert g.origin_value(tau.values) == pytest.approx(-0.5 * math.log(5), abs=1e-3)
    exact = 0.5 * np.log(1 + 4 * g.R**2) - 0.5 * math.log(5)
    assert np.max(np.abs(tau.values - exact)) <= 1e-3


def test_neumann():
    g = grid(32)
    phi, _ = solve_neumann(field(g, 0.0), np.zeros(g.ntheta))
    assert np.max(np.abs(phi.values)) <= 1e-12
    phi, stats = solve_neumann(field(g, 0.0), np.cos(g.theta))
    assert np.max(np.abs(phi.values - g.u)) <= 10 * g.h**2
    assert stats.constraint == "mean-zero"
    with pytest.raises(CompatibilityError) as exc:
        solve_neumann(field(g, 1.0), np.zeros(g.ntheta))
    assert exc.value.defect == pytest.approx(math.pi, abs=1e-3)


def test_cg_and_modal_agree():
    g = grid(16)
    f = ScalarField(g, np.exp(g.u) * np.sin(2 * g.v))
    a, _ = solve_dirichlet_zero(f)
    b, _ = solve_dirichlet_zero(f, method="cg")
    assert np.max(np.abs(a.values - b.values)) <= 0.05 * np.max(np.abs(a.values))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.floats(-1, 1), st.floats(-1, 1))
def test_neumann_harmonic_polynomials(k, a, b):
    # Re/Im z^k are harmonic with normal derivative k Re/Im on the circle
    g = grid(32)
    exact = a * np.real(g.z**k) + b * np.imag(g.z**k)
    flux = k * (a * np.cos(k * g.theta) + b * np.sin(k * g.theta))
    phi, _ = solve_neumann(field(g, 0.0), flux)
    exact = exact - g.integrate(exact) / math.pi
    assert np.max(np.abs(phi.values - exact)) <= 40 * k * k * g.h**2


@pytest.mark.parametrize("w", [0.0, 0.3, 0.6, 0.9, 1.0])
def test_green_kernel_integral(w):
    assert green_kernel_abs_integral(w) == pytest.approx((1 - w * w) / 4, abs=1e-3)


def test_green_kernel_symmetry_and_boundary():
    z, w = 0.3 + 0.2j, -0.1 + 0.5j
    assert green_kernel(z, w) == pytest.approx(green_kernel(w, z))
    assert green_kernel(np.exp(0.7j), w) == pytest.approx(0, abs=1e-14)
    assert green_kernel(z, w) < 0


def test_interpolate():
    g = grid(64)
    assert interpolate(g, g.u * g.v, 0.3 + 0.4j) == pytest.approx(0.12, abs=1e-3)


def test_cauchy_transform():
    g = grid(64)
    assert cauchy_T(field(g, 0.0), 0.3) == 0
    one = ScalarField(g, np.ones(g.shape, dtype=complex))
    assert abs(cauchy_T(one, 0.3) - 0.3) <= 1e-2
    assert abs(cauchy_T(one, 0.3j) - (-0.3j)) <= 1e-2
    assert cauchy_P(field(g, 0.0), 0.5) == 0


def test_vekua_operator_w2():
    g = grid(64)
    f = ScalarField(g, 4j / (1 + 4 * g.R**2) ** 2)
    assert abs(cauchy_P(f, 0.5) - 1j) <= 2e-2
    Pf = cauchy_P_field(f).values
    exact = 4j * np.conj(g.z) / (1 + 4 * g.R**2)
    assert np.max(np.abs(Pf - exact)[g.R <= 0.9]) <= 2e-2
    # the boundary condition Re[w P] = 0 holds on the outermost interior ring
    ring = g.nr - 1
    assert np.max(np.abs(np.real(g.z[ring] * Pf[ring]))) <= 2e-2


def test_vekua_negative_control():
    # a real density violates Re[w P] = 0 near the boundary
    g = grid(64)
    Pf = cauchy_P_field(ScalarField(g, np.ones(g.shape, dtype=complex))).values
    ring = g.nr - 1
    assert np.max(np.abs(np.real(g.z[ring] * Pf[ring]))) > 0.1
