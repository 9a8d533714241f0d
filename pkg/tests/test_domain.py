import numpy as np
import pytest

from ldlab.domain import DomainSpec, Shape, build_domain, layer_positions, slice_heights
from ldlab.errors import DomainSpecError, LayerIndexError


def test_node_weights_sum_to_discrete_area(disk):
    layer = disk.layer
    assert layer.node_weights.sum() == pytest.approx(layer.area, rel=1e-14)
    assert layer.area == pytest.approx(np.pi * 0.25, rel=0.15)


def test_masks_are_consistent(disk):
    layer = disk.layer
    assert np.all(layer.node_mask[layer.boundary_nodes])
    assert not np.any(layer.boundary_nodes & layer.interior_nodes)
    assert layer.edge_mask.sum() == np.count_nonzero(layer.edge_weights)
    # Every active cell center lies inside the disk
    xc, yc = layer.cell_centers
    assert np.all(np.hypot(xc, yc)[layer.cell_mask] < 0.5)


def test_rectangle_mask_is_full(square):
    assert square.layer.cell_mask.all()
    assert square.layer.area == pytest.approx(1.0)


def test_layer_and_slice_heights(disk_spec):
    np.testing.assert_allclose(layer_positions(disk_spec), [0.0, 0.2, 0.4])
    np.testing.assert_allclose(slice_heights(disk_spec, 4), [0.05, 0.15, 0.25, 0.35])


def test_discrete_curl_annihilates_gradients(disk):
    layer, box = disk
    assert abs(layer.curl @ layer.grad).max() == 0.0
    assert abs(box.curl @ box.grad).max() == 0.0


def test_box_contains_cylinder_with_margin(disk):
    layer, box = disk
    x_axis, y_axis, z_axis = box.axes
    assert x_axis[0] <= layer.x[0] - 0.5 and x_axis[-1] >= layer.x[-1] + 0.5
    assert y_axis[0] <= layer.y[0] - 0.5 and y_axis[-1] >= layer.y[-1] + 0.5
    assert z_axis[0] <= -0.5 and z_axis[-1] >= 0.4 + 0.5
    # Layer grid lines are box grid lines
    ratio = box.h / layer.h
    assert ratio == pytest.approx(round(ratio))
    offset = (layer.x[0] - x_axis[0]) / layer.h
    assert offset == pytest.approx(round(offset))


def test_check_layer_rejects_out_of_range(disk):
    disk.layer.check_layer(2)
    with pytest.raises(LayerIndexError) as info:
        disk.layer.check_layer(3)
    assert isinstance(info.value, IndexError)
    assert info.value.N == 2


@pytest.mark.parametrize('overrides', [
    {'radius': 0.01},
    {'h_box': 0.15},
    {'R_box': 0.6},
    {'N': 0},
    {'h_grid': -0.1},
])
def test_invalid_specs_raise(disk_spec, overrides):
    values = dict(shape=disk_spec.shape, radius=disk_spec.radius, h_grid=disk_spec.h_grid, L=disk_spec.L,
                  N=disk_spec.N, R_box=disk_spec.R_box, h_box=disk_spec.h_box)
    values.update(overrides)
    with pytest.raises(DomainSpecError):
        build_domain(DomainSpec(**values))


def test_spec_geometry():
    spec = DomainSpec(shape=Shape.RECTANGLE, width=3.0, height=4.0, L=12.0)
    assert spec.cross_section_diameter == pytest.approx(5.0)
    assert spec.diameter == pytest.approx(13.0)
    assert spec.box_half_width == pytest.approx(26.0)
    assert spec.signed_distance(1.0, 0.0) == pytest.approx(0.5)
    assert spec.cylinder_distance(0.0, 0.0, 0.25) == pytest.approx(0.25)
