import math

import numpy as np
import pytest

from ldlab.domain import DomainSpec, Shape, build_domain
from ldlab.energy import (ModelParams, ampere_equation, el_residual, gl2d_energy, josephson_coupling, layer_equation,
                          ld_energy, ld_energy_split, ld_gradient, limit_energy_terms, trial_state_energy)
from ldlab.errors import GridMismatchError, ParameterError
from ldlab.fields import MagneticPotential, OrderParameterStack, VectorField2DStack, apply_gauge


@pytest.fixture
def params(disk_spec):
    return ModelParams(disk_spec, eps=0.3, lam=0.7, h_ex=0.8)


def test_parameter_validation(disk_spec):
    with pytest.raises(ParameterError):
        ModelParams(disk_spec, eps=0.0)
    with pytest.raises(ParameterError):
        ModelParams(disk_spec, eps=0.1, lam=-1.0)
    with pytest.raises(ParameterError):
        ModelParams(disk_spec, eps=0.1, h_ex=-0.5)
    p = ModelParams(disk_spec, eps=math.exp(-2.0), h_ex=3.0, h0=1.4)
    assert p.log_eps == pytest.approx(2.0)
    assert p.h0_mismatch == pytest.approx(0.1)
    assert p.s == pytest.approx(0.2)


def test_superconducting_state_has_zero_energy(disk, disk_spec):
    p = ModelParams(disk_spec, eps=0.1)
    u = OrderParameterStack.uniform(disk.layer)
    A = MagneticPotential.zero(disk.box)
    e = ld_energy(u, A, p)
    assert e.total == 0.0
    report = el_residual(u, A, p)
    assert report.scaled == 0.0
    assert report.far_field_max == 0.0


def test_trial_state_is_meissner_like(disk, disk_spec):
    p = ModelParams(disk_spec, eps=0.1, h_ex=2.0)
    e = trial_state_energy(p, disk)
    assert e.magnetic < 1e-20
    assert np.all(e.gl_potential == 0.0)
    assert np.all(e.josephson < 1e-25)
    assert e.total == pytest.approx(float(np.sum(e.kinetic)), rel=1e-12)
    assert np.all(e.kinetic > 0.0)


def test_splitting_identity(disk, params, random_state):
    for _ in range(10):
        u, A = random_state(disk, params.h_ex)
        e = ld_energy(u, A, params)
        split = ld_energy_split(u, A, params)
        assert split.total == pytest.approx(e.total, rel=1e-12)
        assert e.split_total == pytest.approx(e.total, rel=1e-12)


def test_gauge_invariance_of_every_term(disk, params, random_state, rng):
    u, A = random_state(disk, params.h_ex)
    before = ld_energy(u, A, params)
    for _ in range(5):
        g = rng.standard_normal(disk.box.node_shape)
        u2, A2 = apply_gauge(u, A, g)
        after = ld_energy(u2, A2, params)
        np.testing.assert_allclose(after.kinetic, before.kinetic, rtol=1e-10)
        np.testing.assert_allclose(after.gl_potential, before.gl_potential, rtol=1e-10)
        np.testing.assert_allclose(after.josephson, before.josephson, rtol=1e-10)
        assert after.magnetic == pytest.approx(before.magnetic, rel=1e-10)


def test_gradient_matches_finite_differences(disk, params, random_state, rng):
    u, A = random_state(disk, params.h_ex)
    grad = ld_gradient(u, A, params)
    free = disk.box.free_edges
    t = 1e-6
    for _ in range(10):
        du = rng.standard_normal(u.u.shape) + 1j * rng.standard_normal(u.u.shape)
        dA = np.where(free, rng.standard_normal(A.vector.shape), 0.0)
        plus = ld_energy(u.with_values(u.u + t * du), MagneticPotential(A.box, A.vector + t * dA, A.h_ex), params)
        minus = ld_energy(u.with_values(u.u - t * du), MagneticPotential(A.box, A.vector - t * dA, A.h_ex), params)
        numeric = (plus.total - minus.total) / (2.0 * t)
        exact = float(np.sum(grad.u.real * du.real + grad.u.imag * du.imag) + grad.A @ dA)
        assert numeric == pytest.approx(exact, rel=1e-5)


def test_clamped_edges_have_zero_gradient(disk, params, random_state):
    u, A = random_state(disk, params.h_ex)
    grad = ld_gradient(u, A, params)
    assert np.all(grad.A[~disk.box.free_edges] == 0.0)


def test_josephson_vanishes_for_aligned_layers(disk, disk_spec, rng):
    p = ModelParams(disk_spec, eps=0.2, lam=0.5)
    layer_values = np.exp(1j * rng.uniform(0, 2 * np.pi, disk.layer.shape))
    u = OrderParameterStack(disk.layer, np.stack([layer_values] * 3))
    A = MagneticPotential.applied(disk.box, 0.0)
    assert np.all(ld_energy(u, A, p).josephson < 1e-28)
    np.testing.assert_allclose(josephson_coupling(u, A, p), 0.0, atol=1e-12)


def test_gl2d_energy(disk):
    layer = disk.layer
    assert gl2d_energy(np.ones(layer.shape), 0.1, layer) == 0.0
    half = np.full(layer.shape, 0.5 + 0.0j)
    expected = float(np.sum(layer.node_weights)) * 0.75 ** 2 / (2 * 0.1 ** 2) / 2
    assert gl2d_energy(half, 0.1, layer) == pytest.approx(expected)


def test_mismatched_grids_rejected(disk, square, disk_spec):
    p = ModelParams(disk_spec, eps=0.1)
    with pytest.raises(GridMismatchError):
        ld_energy(OrderParameterStack.uniform(square.layer), MagneticPotential.zero(disk.box), p)


def test_limit_energy_of_the_applied_candidate(disk):
    layer, box = disk
    h0 = 0.5
    v = VectorField2DStack.zeros(layer, [0.1, 0.3], 0.2)
    terms = limit_energy_terms(v, MagneticPotential.applied(box, h0), h0)
    assert terms.total_variation == 0.0
    assert terms.magnetic < 1e-20
    # Edge quadrature of |h0 a|^2 over both slices; close to h0^2 pi R^4 L / 8
    _, y1 = layer.x_edge_midpoints
    x2, _ = layer.y_edge_midpoints
    per_slice = layer.cell_area * (np.sum((0.5 * h0 * y1[layer.x_edge_mask]) ** 2)
                                   + np.sum((0.5 * h0 * x2[layer.y_edge_mask]) ** 2))
    assert terms.l2 == pytest.approx(2 * 0.2 * per_slice, rel=1e-12)
    assert terms.l2 == pytest.approx(h0 ** 2 * math.pi * 0.5 ** 4 * 0.4 / 8, rel=0.5)
    assert terms.value == pytest.approx(0.5 * (terms.l2 + terms.total_variation + terms.magnetic))


# Euler-Lagrange equations

def test_equations_agree_with_the_gradient(disk, params, random_state):
    u, A = random_state(disk, params.h_ex)
    grad = ld_gradient(u, A, params)
    w_v = disk.layer.node_weights
    active = w_v > 0
    eq = layer_equation(u, A, params)
    np.testing.assert_allclose(eq[:, active] * params.s * w_v[active], grad.u[:, active], rtol=1e-9, atol=1e-12)
    assert np.all(eq[:, ~active] == 0.0)
    ampere = ampere_equation(u, A, params)
    np.testing.assert_allclose(ampere * disk.box.volume, grad.A[disk.box.free_edges], rtol=1e-9, atol=1e-12)


def test_single_gap_uses_boundary_couplings_only(rng):
    spec = DomainSpec(shape=Shape.DISK, radius=0.5, h_grid=0.1, L=0.4, N=1, R_box=1.0, h_box=0.2)
    domain = build_domain(spec)
    p = ModelParams(spec, eps=0.3, lam=0.7)
    u = OrderParameterStack.random(domain.layer, rng)
    A = MagneticPotential.zero(domain.box)
    P = josephson_coupling(u, A, p)
    # With no interlayer phase the two one-sided couplings are opposite
    np.testing.assert_allclose(P[0], -P[1], atol=1e-12)
    np.testing.assert_allclose(P[0], (u.u[1] - u.u[0]) / (0.7 ** 2 * 0.4 ** 2), rtol=1e-12)
    grad = ld_gradient(u, A, p)
    w_v = domain.layer.node_weights
    active = w_v > 0
    eq = layer_equation(u, A, p)
    np.testing.assert_allclose(eq[:, active] * p.s * w_v[active], grad.u[:, active], rtol=1e-9, atol=1e-12)


def test_residual_grows_linearly_off_a_critical_point(disk, disk_spec, rng):
    p = ModelParams(disk_spec, eps=0.2)
    base = OrderParameterStack.uniform(disk.layer)
    A = MagneticPotential.zero(disk.box)
    assert el_residual(base, A, p).scaled == 0.0
    du = rng.standard_normal(base.u.shape) + 1j * rng.standard_normal(base.u.shape)
    dA = np.where(disk.box.free_edges, rng.standard_normal(disk.box.n_edges), 0.0)

    def residual(delta):
        u = base.with_values(base.u + delta * du)
        return el_residual(u, MagneticPotential(disk.box, delta * dA), p)

    small, large = residual(1e-4), residual(2e-4)
    assert small.layer_l2 > 0.0 and small.ampere_l2 > 0.0
    assert large.layer_l2 / small.layer_l2 == pytest.approx(2.0, rel=1e-3)
    assert large.ampere_l2 / small.ampere_l2 == pytest.approx(2.0, rel=1e-3)
