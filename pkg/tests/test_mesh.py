import numpy as np
import pytest
from hypothesis import given, strategies as st

from stokeslab.mesh import (
    CENTER, NODE, PRESSURE, XEDGE, YEDGE, DofIndex, StructuredGrid, boundary_mask, dof_coordinates,
    dof_counts, fine_position, flat_offset, from_fine_position, from_flat_offset, hierarchy_sizes,
    local_patch_numbering, q1_coordinates, q2_coordinates,
)


def test_dof_counts_small_grid():
    assert dof_counts(StructuredGrid(2)) == (25, 50, 9)


@pytest.mark.parametrize("cls,shape", [(NODE, (5, 5)), (XEDGE, (4, 5)), (YEDGE, (5, 4)),
                                       (CENTER, (4, 4)), (PRESSURE, (5, 5))])
def test_class_shapes(cls, shape):
    assert StructuredGrid(4).class_shape(cls) == shape


def test_class_sizes_partition_fine_lattice():
    g = StructuredGrid(6)
    total = sum(np.prod(g.class_shape(c)) for c in (NODE, XEDGE, YEDGE, CENTER))
    assert total == g.n_fine ** 2


@given(st.integers(1, 12), st.data())
def test_fine_position_round_trip(N, data):
    g = StructuredGrid(N)
    I = data.draw(st.integers(0, g.n_fine - 1))
    J = data.draw(st.integers(0, g.n_fine - 1))
    d = from_fine_position(g, I, J)
    assert fine_position(g, d) == (I, J)
    assert from_flat_offset(g, d.cls, flat_offset(g, d)) == d


def test_coordinates_match_lattice():
    g = StructuredGrid(4)
    x, y = q2_coordinates(g)
    assert x.shape == (9, 9)
    assert dof_coordinates(g, DofIndex(XEDGE, 1, 2)) == pytest.approx((0.375, 0.5))
    assert x[4, 3] == pytest.approx(0.375) and y[4, 3] == pytest.approx(0.5)
    xp, yp = q1_coordinates(g)
    assert dof_coordinates(g, DofIndex(PRESSURE, 3, 1)) == pytest.approx((xp[1, 3], yp[1, 3]))


@pytest.mark.parametrize("i,j,expected", [(2, 2, 25), (0, 2, 15), (2, 4, 15), (0, 0, 9), (4, 4, 9)])
def test_patch_sizes_around_nodes(i, j, expected):
    assert len(local_patch_numbering(StructuredGrid(4), DofIndex(NODE, i, j))) == expected


def test_patch_order_is_lexicographic_y_major():
    g = StructuredGrid(4)
    pos = [fine_position(g, d) for d in local_patch_numbering(g, DofIndex(NODE, 1, 1))]
    assert pos == sorted(pos, key=lambda p: (p[1], p[0]))
    assert pos[0] == (0, 0) and pos[-1] == (4, 4)


def test_edge_and_center_patches():
    g = StructuredGrid(4)
    assert len(local_patch_numbering(g, DofIndex(XEDGE, 1, 2))) == 15
    assert len(local_patch_numbering(g, DofIndex(YEDGE, 1, 1))) == 15
    assert len(local_patch_numbering(g, DofIndex(CENTER, 0, 0))) == 9


def test_out_of_range_and_bad_class():
    g = StructuredGrid(2)
    with pytest.raises(IndexError):
        flat_offset(g, DofIndex(CENTER, 2, 0))
    with pytest.raises(ValueError):
        flat_offset(g, DofIndex("corner", 0, 0))
    with pytest.raises(ValueError):
        fine_position(g, DofIndex(PRESSURE, 0, 0))
    with pytest.raises(ValueError):
        StructuredGrid(0)


def test_hierarchy_sizes():
    assert hierarchy_sizes(32, 4) == [4, 8, 16, 32]
    assert hierarchy_sizes(4, 4) == [4]
    with pytest.raises(ValueError):
        hierarchy_sizes(24, 4)
    with pytest.raises(ValueError):
        hierarchy_sizes(8, 1)


def test_coarsen_odd_grid_fails():
    assert StructuredGrid(8, 3).coarsened() == StructuredGrid(4, 2)
    with pytest.raises(ValueError):
        StructuredGrid(5).coarsened()


def test_boundary_mask_counts():
    g = StructuredGrid(4)
    mask = boundary_mask(g)
    assert mask.sum() == 4 * (g.n_fine - 1)
    assert not mask[1:-1, 1:-1].any()
