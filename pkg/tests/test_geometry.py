import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import patmoco
from patmoco.geometry import (
    Ellipse,
    default_phantom_shapes,
    make_grid,
    make_phantom,
    make_scan,
    read_image,
    write_image,
    write_pgm,
)


class TestMakeGrid:
    def test_paper_resolution(self):
        grid = make_grid(256, 0.5)
        assert grid.pixel_size == 1.0 / 256

    def test_two_pixel_centers(self):
        grid = make_grid(2, 0.5)
        x1, x2 = grid.pixel_centers()
        assert np.allclose(sorted(x1[0]), [-0.25, 0.25])
        assert np.allclose(sorted(x2[:, 0]), [-0.25, 0.25])

    def test_corner_pixel_center(self):
        grid = make_grid(64, 0.5)
        x1, x2 = grid.pixel_to_physical(0, 0)
        assert x1 == -0.5 + 1.0 / 128
        assert x2 == 0.5 - 1.0 / 128

    @pytest.mark.parametrize("n_side", [2, 64, 128, 256])
    def test_round_trip_exact(self, n_side):
        grid = make_grid(n_side, 0.5)
        rows, cols = np.meshgrid(np.arange(n_side), np.arange(n_side))
        x1, x2 = grid.pixel_to_physical(rows, cols)
        r2, c2 = grid.physical_to_pixel(x1, x2)
        assert np.array_equal(r2, rows)
        assert np.array_equal(c2, cols)

    def test_round_trip_non_dyadic(self):
        grid = make_grid(7, 0.3)
        rows = np.arange(7)
        x1, x2 = grid.pixel_to_physical(rows, rows)
        r2, c2 = grid.physical_to_pixel(x1, x2)
        assert np.allclose(r2, rows, atol=1e-12)
        assert np.allclose(c2, rows, atol=1e-12)

    @pytest.mark.parametrize("n_side,extent", [(1, 0.5), (0, 0.5), (64, 0.0), (64, 1.0), (64, -0.1)])
    def test_rejects_bad_parameters(self, n_side, extent):
        with pytest.raises(ValueError):
            make_grid(n_side, extent)


class TestMakeScan:
    def test_paper_scan(self):
        scan = make_scan(120, 0.0, 3.0, 363, 2.0)
        assert scan.n_angles == 120
        assert scan.n_radii == 363
        assert np.isclose(np.rad2deg(scan.angles[-1]), 357.0)
        assert np.isclose(scan.radii[-1], 2.0)

    def test_degenerate_scan(self):
        scan = make_scan(1, 90.0, 0.0, 1, 2.0)
        z = scan.transducer(0)
        assert np.allclose(z, (0.0, 1.0), atol=1e-15)
        assert np.allclose(scan.radii, [2.0])

    def test_four_angle_scan(self):
        scan = make_scan(4, 0.0, 90.0, 2, 1.0)
        assert np.allclose(np.rad2deg(scan.angles), [0, 90, 180, 270])
        assert np.allclose(scan.radii, [0.5, 1.0])

    @given(
        n_angles=st.integers(2, 50),
        start=st.floats(-90, 90),
        step=st.floats(0.5, 15),
    )
    @settings(max_examples=30, deadline=None)
    def test_uniform_spacing(self, n_angles, start, step):
        scan = make_scan(n_angles, start, step, 5, 2.0)
        gaps = np.diff(scan.angles)
        assert np.allclose(gaps, gaps[0], rtol=0, atol=1e-12)

    def test_radii_start_above_zero(self):
        scan = make_scan(3, 0.0, 10.0, 10, 2.0)
        assert scan.radii[0] > 0.0

    @pytest.mark.parametrize("kwargs", [
        dict(n_angles=0, start_deg=0, step_deg=1, n_radii=5, r_max=2),
        dict(n_angles=5, start_deg=0, step_deg=1, n_radii=0, r_max=2),
        dict(n_angles=5, start_deg=0, step_deg=1, n_radii=5, r_max=2.5),
        dict(n_angles=5, start_deg=0, step_deg=1, n_radii=5, r_max=0.0),
    ])
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            make_scan(**kwargs)


class TestPhantom:
    def test_empty_spec_is_zero(self, small_grid):
        image = make_phantom(small_grid, [])
        assert not image.values.any()

    def test_full_disc_constant(self, small_grid):
        image = make_phantom(small_grid, [Ellipse(0, 0, 0.5, 0.5, 100.0)])
        # every pixel center lies inside the disc through the domain corners?
        # no: the disc has radius 0.5, corners are sqrt(2)/2 away, so corner
        # pixels stay zero; interior pixels must be exactly 100.
        x1, x2 = small_grid.pixel_centers()
        inside = x1**2 + x2**2 <= 0.25
        mat = image.to_matrix()
        assert np.all(mat[inside] == 100.0)
        assert np.all(mat[~inside] == 0.0)

    def test_rejects_out_of_domain_shape(self, small_grid):
        with pytest.raises(ValueError):
            make_phantom(small_grid, [Ellipse(0.4, 0.0, 0.2, 0.1, 50.0)])

    def test_clamps_to_display_range(self, small_grid):
        image = make_phantom(
            small_grid,
            [Ellipse(0, 0, 0.3, 0.3, 200.0), Ellipse(0, 0, 0.2, 0.2, 200.0),
             Ellipse(0.3, 0.3, 0.05, 0.05, -50.0)],
        )
        assert image.values.max() == 255.0
        assert image.values.min() == 0.0

    @pytest.mark.parametrize("gamma", [-0.05, 0.05])
    def test_default_phantom_support_margin_under_stretch(self, gamma):
        # prerequisite for keeping the deformed object inside the domain
        grid = make_grid(128, 0.5)
        image = make_phantom(grid, default_phantom_shapes())
        k = patmoco.stretch_matrix(grid, gamma, -0.5)
        stretched = k.apply(image.values).reshape((128, 128), order="F")
        assert not stretched[:2, :].any()
        assert not stretched[-2:, :].any()
        assert not stretched[:, :2].any()
        assert not stretched[:, -2:].any()


class TestImageIO:
    def test_raw_round_trip(self, small_grid, tmp_path, rng):
        image = patmoco.Image(small_grid, rng.standard_normal(small_grid.n_pixels))
        path = tmp_path / "img.img"
        write_image(image, path)
        back = read_image(path)
        assert back.grid == small_grid
        assert np.array_equal(back.values, image.values)

    def test_raw_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.img"
        path.write_bytes(b"NOTMAGIC" + b"\0" * 64)
        with pytest.raises(ValueError, match="magic"):
            read_image(path)

    def test_pgm_header_and_clamping(self, tmp_path):
        grid = make_grid(2, 0.5)
        image = patmoco.Image(grid, np.array([-5.0, 0.4, 254.6, 300.0]))
        path = tmp_path / "img.pgm"
        write_pgm(image, path)
        data = path.read_bytes()
        assert data.startswith(b"P5\n2 2\n255\n")
        # column-major values [-5, .4, 254.6, 300] map to matrix
        # [[-5, 254.6], [0.4, 300]] -> row-major bytes 0, 255, 0, 255
        assert data[-4:] == bytes([0, 255, 0, 255])

    def test_values_length_checked(self, small_grid):
        with pytest.raises(ValueError):
            patmoco.Image(small_grid, np.zeros(5))
