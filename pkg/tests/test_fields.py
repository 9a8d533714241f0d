import numpy as np
import pytest

from ldlab.domain import build_domain
from ldlab.errors import GridMismatchError, LayerIndexError
from ldlab.fields import (MagneticPotential, OrderParameterStack, VectorField2DStack, apply_gauge, curl,
                          divergence, edge_inner, hodge_decompose, project_coulomb, sample_stack, trace)


def test_order_parameter_validation(disk):
    layer = disk.layer
    with pytest.raises(GridMismatchError):
        OrderParameterStack(layer, np.ones((2,) + layer.shape))
    bad = np.ones((3,) + layer.shape, dtype=complex)
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        OrderParameterStack(layer, bad)


def test_containers_are_read_only(disk):
    u = OrderParameterStack.uniform(disk.layer)
    with pytest.raises(ValueError):
        u.u[0, 0, 0] = 2.0


def test_random_modulus_bounded(disk, rng):
    u = OrderParameterStack.random(disk.layer, rng)
    assert np.max(np.abs(u.u)) <= 1.0


def test_applied_potential_has_uniform_field(disk):
    box = disk.box
    A = MagneticPotential.applied(box, 1.7)
    np.testing.assert_allclose(curl(A), 1.7 * box.applied_field_faces, atol=1e-12)
    div = divergence(A).reshape(box.node_shape)
    np.testing.assert_allclose(div[1:-1, 1:-1, 1:-1], 0.0, atol=1e-12)
    assert A.clamp_error() == 0.0


def test_trace_of_applied_potential(disk):
    layer, box = disk
    A = MagneticPotential.applied(box, 2.0)
    a1, a2 = trace(A, 1, layer)
    _, y1 = layer.x_edge_midpoints
    x2, _ = layer.y_edge_midpoints
    np.testing.assert_allclose(a1, -y1 * layer.x_edge_mask, atol=1e-12)
    np.testing.assert_allclose(a2, x2 * layer.y_edge_mask, atol=1e-12)
    with pytest.raises(LayerIndexError):
        trace(A, 3, layer)


def test_gauge_shifts_traces_by_layer_gradients(disk, rng):
    layer, box = disk
    u = OrderParameterStack.uniform(layer)
    A = MagneticPotential.zero(box)
    g = rng.standard_normal(box.node_shape)
    u2, A2 = apply_gauge(u, A, g)
    w = u2.u[1]
    a1, a2 = trace(A2, 1, layer)
    # Exact commuting interpolation: h * trace = difference of interpolated g
    d1 = w[1:, :] * np.conj(w[:-1, :])
    d2 = w[:, 1:] * np.conj(w[:, :-1])
    np.testing.assert_allclose(np.exp(1j * layer.h * a1)[layer.x_edge_mask], d1[layer.x_edge_mask], atol=1e-10)
    np.testing.assert_allclose(np.exp(1j * layer.h * a2)[layer.y_edge_mask], d2[layer.y_edge_mask], atol=1e-10)


def test_coulomb_projection_neumann(disk, rng):
    box = disk.box
    A = MagneticPotential(box, rng.standard_normal(box.n_edges))
    A_c, g = project_coulomb(A)
    assert g.shape == box.node_shape
    assert np.max(np.abs(divergence(A_c))) <= 1e-6 * np.max(np.abs(divergence(A)))
    np.testing.assert_allclose(curl(A_c), curl(A), atol=1e-9)


def test_coulomb_projection_keeps_clamp(disk, rng):
    box = disk.box
    g = np.zeros(box.node_shape)
    g[1:-1, 1:-1, 1:-1] = rng.standard_normal(tuple(n - 2 for n in box.node_shape))
    A = MagneticPotential(box, MagneticPotential.applied(box, 0.5).vector + box.grad @ g.ravel(), 0.5)
    assert A.clamp_error() == pytest.approx(0.0, abs=1e-14)
    A_c, _ = project_coulomb(A, keep_clamp=True)
    assert A_c.clamp_error() <= 1e-12
    div = divergence(A_c)[box.interior_nodes]
    assert np.max(np.abs(div)) <= 1e-6 * np.max(np.abs(divergence(A)[box.interior_nodes]))


def test_hodge_split_of_a_gradient(disk, rng):
    layer = disk.layer
    g0 = rng.standard_normal(layer.shape)
    v1, v2 = layer.split_edges(layer.grad @ g0.ravel())
    v1, v2 = v1 * layer.x_edge_mask, v2 * layer.y_edge_mask
    split = hodge_decompose(v1, v2, layer)
    np.testing.assert_allclose(split.v_curl[0], 0.0, atol=1e-8)
    np.testing.assert_allclose(split.v_curl[1], 0.0, atol=1e-8)
    np.testing.assert_allclose(split.v_grad[0], v1, atol=1e-8)
    active = layer.node_mask
    expected = g0[active] - g0[active].mean()
    np.testing.assert_allclose(split.potential[active], expected, atol=1e-8)


def test_hodge_parts_are_orthogonal(square, rng):
    layer = square.layer
    v1 = rng.standard_normal((layer.shape[0] - 1, layer.shape[1]))
    v2 = rng.standard_normal((layer.shape[0], layer.shape[1] - 1))
    split = hodge_decompose(v1, v2, layer)
    total = edge_inner(layer, (v1, v2), (v1, v2))
    assert abs(edge_inner(layer, split.v_curl, split.v_grad)) <= 1e-8 * total
    np.testing.assert_allclose(split.v_curl[0] + split.v_grad[0], v1, atol=1e-12)
    # Stream function vanishes off the active cells and the gradient part is curl-free
    assert np.all(split.stream[~layer.cell_mask] == 0.0)
    curl_grad = layer.active_curl @ layer.join_edges(*split.v_grad)[layer.edge_mask]
    assert np.max(np.abs(curl_grad)) <= 1e-7 * np.max(np.abs(layer.curl @ layer.join_edges(v1, v2)))


def test_sample_stack_of_rotation(disk):
    layer = disk.layer
    stack = sample_stack(lambda x, y, z: (-0.5 * y, 0.5 * x), layer, [0.1, 0.3], 0.2)
    assert stack.slices == 2
    _, y1 = layer.x_edge_midpoints
    np.testing.assert_allclose(stack.v1[1], -0.5 * y1 * layer.x_edge_mask)
    zero = VectorField2DStack.zeros(layer, [0.1, 0.3], 0.2)
    assert zero.l2_norm() == 0.0
    assert (stack - stack).l2_norm() == 0.0
    assert stack.scaled(2.0).l2_norm() == pytest.approx(2.0 * stack.l2_norm())


def test_mismatched_boxes_rejected(disk_spec, disk):
    other = build_domain(disk_spec.__class__(radius=0.5, h_grid=0.1, L=0.4, N=2, R_box=1.2, h_box=0.2))
    A = MagneticPotential.zero(disk.box)
    with pytest.raises(GridMismatchError):
        A + MagneticPotential.zero(other.box)
