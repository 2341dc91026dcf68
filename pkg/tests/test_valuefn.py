import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import RegularGridInterpolator

from hjmpc import valuefn as vf
from hjmpc.dynamics import ContractError
from hjmpc.grid import Axis, Grid, ValueField


def _field_1d(values):
    return ValueField(Grid((Axis(0.0, float(len(values) - 1), len(values)),)), values)


def _random_field(seed=0, periodic=(2,)):
    grid = Grid.from_bounds([-1, -2, -math.pi, 0.5], [1, 2, math.pi, 2.0], (5, 6, 7, 4), periodic_dims=periodic)
    return ValueField(grid, np.random.default_rng(seed).normal(size=grid.shape))


def _smooth_field(grid):
    s = grid.states
    return ValueField(grid, np.sin(s[..., 0]) * np.cos(s[..., 1]) + 0.3 * np.sin(s[..., 2]) + s[..., 3] ** 2)


def test_axis_spacing_open_and_periodic():
    assert Axis(0.0, 1.0, 11).spacing == pytest.approx(0.1)
    assert Axis(-math.pi, math.pi, 4, periodic=True).spacing == pytest.approx(math.pi / 2)


def test_grid_rejects_degenerate_axes():
    with pytest.raises(ValueError):
        Axis(1.0, 1.0, 3)
    with pytest.raises(ValueError):
        Axis(0.0, 1.0, 1)


def test_value_field_rejects_wrong_size_and_nonfinite():
    grid = Grid.from_bounds([0], [1], [3])
    with pytest.raises(ValueError):
        ValueField(grid, [0.0, 1.0])
    with pytest.raises(ValueError):
        ValueField(grid, [0.0, np.nan, 1.0])


def test_interpolate_at_node_returns_stored_value():
    f = _random_field()
    idx = (2, 3, 4, 1)
    x = np.array([ax.nodes[i] for ax, i in zip(f.grid.axes, idx)])
    assert vf.interpolate(f, x) == f.values[idx]


def test_interpolate_1d_midpoint():
    assert vf.interpolate(_field_1d([0.0, 2.0]), [0.5]) == 1.0


def test_interpolate_2d_cell_centre_is_corner_average():
    grid = Grid.from_bounds([0, 0], [1, 1], [2, 2])
    f = ValueField(grid, [[0.0, 2.0], [4.0, 6.0]])
    assert vf.interpolate(f, [0.5, 0.5]) == pytest.approx(3.0)


def test_interpolate_rejects_nan_and_bad_shape():
    f = _random_field()
    with pytest.raises(ContractError):
        vf.interpolate(f, [0, 0, np.nan, 1])
    with pytest.raises(ContractError):
        vf.interpolate(f, [0, 0, 0])


def test_out_of_box_queries_are_clamped_and_flagged():
    f = _random_field()
    inside = np.array([1.0, 2.0, 0.3, 2.0])
    outside = np.array([1.7, 2.5, 0.3, 9.0])
    v_in, flag_in = vf.interpolate(f, inside, return_flag=True)
    v_out, flag_out = vf.interpolate(f, outside, return_flag=True)
    assert not flag_in and flag_out
    assert v_out == v_in


def test_interpolate_matches_scipy_on_non_periodic_grid():
    f = _random_field(3, periodic=())
    pts = np.random.default_rng(4).uniform(f.grid.lo, f.grid.hi, size=(500, 4))
    ref = RegularGridInterpolator([a.nodes for a in f.grid.axes], f.values)(pts)
    assert np.allclose(vf.interpolate(f, pts), ref, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-1, 1), st.floats(-2, 2), st.floats(-10, 10), st.floats(0.5, 2.0))
def test_interpolant_bounded_by_enclosing_corners(x, y, th, v):
    f = _random_field(5)
    pt = np.array([x, y, th, v])
    val = vf.interpolate(f, pt)
    g = f.grid
    corners = []
    lo_idx = []
    for d, ax in enumerate(g.axes):
        c = pt[d]
        if ax.periodic:
            c = (c - ax.lo) % (ax.hi - ax.lo) + ax.lo
            i = min(int(math.floor((c - ax.lo) / ax.spacing)), ax.count - 1)
            lo_idx.append((i, (i + 1) % ax.count))
        else:
            i = min(int(math.floor((c - ax.lo) / ax.spacing)), ax.count - 2)
            lo_idx.append((i, i + 1))
    for a in lo_idx[0]:
        for b in lo_idx[1]:
            for c in lo_idx[2]:
                for d in lo_idx[3]:
                    corners.append(f.values[a, b, c, d])
    assert min(corners) - 1e-12 <= val <= max(corners) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-3, 3), st.floats(0.6, 1.9))
def test_periodic_axis_wraps(x, th, v):
    f = _random_field(6)
    a = vf.interpolate(f, [x, 0.1, th, v])
    b = vf.interpolate(f, [x, 0.1, th + 2 * math.pi, v])
    assert abs(a - b) <= 1e-12


def test_interpolant_continuous_across_faces():
    f = _random_field(7)
    face = f.grid.axes[1].nodes[2]
    for eps in (1e-13, 1e-14):
        a = vf.interpolate(f, [0.1, face - eps, 0.4, 1.2])
        b = vf.interpolate(f, [0.1, face + eps, 0.4, 1.2])
        assert abs(a - b) <= 1e-12


def test_gradient_of_linear_field():
    grid = Grid.from_bounds([0, 0, 0], [1, 2, 3], (4, 5, 6))
    f = ValueField(grid, 3.0 * grid.states[..., 0])
    g = vf.gradient(f, [[0.33, 1.1, 2.2], [0.5, 0.5, 0.5]])
    assert np.allclose(g, [[3, 0, 0], [3, 0, 0]], atol=1e-12)


def test_gradient_of_constant_field_is_zero():
    f = ValueField(Grid.from_bounds([0, 0], [1, 1], (3, 3)), np.full((3, 3), 2.5))
    assert np.array_equal(vf.gradient(f, [0.3, 0.7]), [0.0, 0.0])


def test_gradient_matches_central_differences_inside_cells():
    grid = Grid.from_bounds([-1, -2, -math.pi, 0.5], [1, 2, math.pi, 2.0], (9, 9, 12, 6), periodic_dims=(2,))
    f = _smooth_field(grid)
    rng = np.random.default_rng(8)
    dx = grid.spacing
    for _ in range(50):
        # keep every coordinate at least h away from a face so the FD stencil stays in one cell
        cell = np.array([rng.integers(0, n - 1) for n in grid.shape])
        frac = rng.uniform(0.2, 0.8, size=4)
        x = grid.lo + (cell + frac) * dx
        g = vf.gradient(f, x)
        fd = np.empty(4)
        for i in range(4):
            e = np.zeros(4)
            e[i] = dx[i] / 10
            fd[i] = (vf.interpolate(f, x + e) - vf.interpolate(f, x - e)) / (2 * e[i])
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


def test_gradient_on_face_uses_lower_cell():
    f = _field_1d([0.0, 1.0, 5.0])
    assert vf.gradient(f, [1.0])[0] == pytest.approx(1.0)
    assert vf.gradient(f, [1.0 + 1e-9])[0] == pytest.approx(4.0)


def test_is_safe_examples():
    f = _field_1d([0.2, 0.2])
    assert vf.is_safe(vf.SafetyOracle(f, 0.0), [0.5])
    assert not vf.is_safe(vf.SafetyOracle(_field_1d([-0.01, -0.01]), 0.0), [0.5])
    assert not vf.is_safe(vf.SafetyOracle(_field_1d([0.04, 0.04]), 0.05), [0.5])


def test_save_load_round_trip_is_bit_exact(tmp_path):
    f = _random_field(9)
    path = tmp_path / "f.hjvf"
    vf.save(f, path)
    g = vf.load(path)
    assert g == f
    assert g.values.tobytes() == f.values.tobytes()


def test_file_layout_is_little_endian_and_packed(tmp_path):
    f = _field_1d([1.5, -2.0, 0.25])
    path = tmp_path / "f.hjvf"
    vf.save(f, path)
    expected = (b"HJVF" + struct.pack("<II", 1, 1) + struct.pack("<ddIB", 0.0, 2.0, 3, 0)
                + struct.pack("<3d", 1.5, -2.0, 0.25))
    assert path.read_bytes() == expected


def test_corrupt_files_raise_distinct_errors(tmp_path):
    path = tmp_path / "f.hjvf"
    vf.save(_random_field(10), path)
    good = path.read_bytes()
    with pytest.raises(vf.BadMagicError):
        vf.from_bytes(b"HJVG" + good[4:])
    with pytest.raises(vf.VersionMismatchError):
        vf.from_bytes(good[:4] + struct.pack("<I", 2) + good[8:])
    with pytest.raises(vf.TruncatedPayloadError):
        vf.from_bytes(good[:-8])
    with pytest.raises(vf.TruncatedPayloadError):
        vf.from_bytes(good + b"\0" * 8)
    with pytest.raises(vf.TruncatedPayloadError):
        vf.from_bytes(good[:20])
    errors = {vf.BadMagicError, vf.VersionMismatchError, vf.TruncatedPayloadError}
    assert len(errors) == 3 and all(issubclass(e, vf.ValueFileError) for e in errors)
