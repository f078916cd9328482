import numpy as np
import pytest

import patmoco
from patmoco.errors import GeometryMismatchError
from patmoco.forward import (
    ForwardOperator,
    Sinogram,
    add_noise,
    forward_adjoint,
    forward_apply,
    read_sinogram,
    rel_error,
    sinogram_to_csv,
    sinogram_to_pgm,
    write_sinogram,
)


@pytest.fixture(scope="module")
def motion6():
    return patmoco.MotionParams(np.linspace(-0.04, 0.05, 6), -0.5)


@pytest.fixture(scope="module")
def op(small_projections, motion6):
    return ForwardOperator(small_projections, motion6)


class TestForwardApply:
    def test_zero_image(self, op, small_grid):
        sino = forward_apply(op, patmoco.Image(small_grid, np.zeros(small_grid.n_pixels)))
        assert not sino.values.any()

    def test_zero_motion_equals_pure_projection(self, small_projections, small_grid, rng):
        motion = patmoco.MotionParams(np.zeros(6), -0.5)
        op0 = ForwardOperator(small_projections, motion)
        f = rng.random(small_grid.n_pixels)
        sino = op0.apply(f)
        direct = np.concatenate([m.apply(f) for m in small_projections.matrices])
        assert np.array_equal(sino, direct)

    def test_linearity(self, op, rng):
        f1 = rng.standard_normal(op.n_cols)
        f2 = rng.standard_normal(op.n_cols)
        combo = op.apply(2.0 * f1 - 3.0 * f2)
        parts = 2.0 * op.apply(f1) - 3.0 * op.apply(f2)
        assert np.allclose(combo, parts, rtol=1e-12, atol=1e-12)

    def test_grid_mismatch_rejected(self, op):
        other = patmoco.make_grid(32, 0.5)
        with pytest.raises(GeometryMismatchError):
            forward_apply(op, patmoco.Image(other, np.zeros(other.n_pixels)))

    def test_block_structure_follows_angle_order(self, small_projections, motion6, rng):
        f = rng.random(small_projections.grid.n_pixels)
        op_full = ForwardOperator(small_projections, motion6)
        sino = Sinogram(small_projections.scan, op_full.apply(f))
        from patmoco.motion import stretch_matrix

        for i in (0, 3, 5):
            k = stretch_matrix(
                small_projections.grid, motion6.gammas[i], motion6.baseline_c
            )
            block = small_projections.matrices[i].apply(k.apply(f))
            assert np.array_equal(sino.block(i), block)


class TestAdjoint:
    def test_zero_sinogram(self, op, small_projections):
        sino = Sinogram(small_projections.scan, np.zeros(op.n_rows))
        image = forward_adjoint(op, sino)
        assert not image.values.any()

    def test_adjoint_identity(self, op, rng):
        for _ in range(5):
            f = rng.standard_normal(op.n_cols)
            g = rng.standard_normal(op.n_rows)
            af = op.apply(f)
            assert abs(af @ g - f @ op.apply_transpose(g)) <= 1e-12 * (
                np.linalg.norm(af) * np.linalg.norm(g)
            )

    def test_single_entry_backprojects_near_preimage_ellipse(self, small_projections):
        # the adjoint of one sinogram sample spreads over the pre-image of
        # the measurement circle under the stretch: an axis-aligned ellipse
        grid = small_projections.grid
        scan = small_projections.scan
        a, c = 1.05, -0.5
        motion = patmoco.MotionParams(np.full(6, a - 1.0), c)
        op_a = ForwardOperator(small_projections, motion)
        i, j = 1, 25
        g = np.zeros(op_a.n_rows)
        g[i * scan.n_radii + j] = 1.0
        back = op_a.apply_transpose(g).reshape((grid.n_side, grid.n_side), order="F")
        z1, z2 = scan.transducer(i)
        r = scan.radii[j]
        x1, x2 = grid.pixel_centers()
        # ellipse |z - Phi(x)| = r in rest coordinates
        dist = np.hypot(z1 - x1, z2 - (c + a * (x2 - c)))
        hot = np.abs(back) > 1e-12
        assert hot.any()
        assert np.all(np.abs(dist[hot] - r) < 3 * grid.pixel_size)


class TestNoise:
    def test_level_zero_returns_copy(self, small_projections):
        sino = Sinogram(small_projections.scan, np.ones(6 * 41))
        noisy = add_noise(sino, 0.0, 42)
        assert np.array_equal(noisy.values, sino.values)
        assert noisy.values is not sino.values

    def test_exact_level(self, small_projections, rng):
        sino = Sinogram(small_projections.scan, rng.random(6 * 41) * 50)
        noisy = add_noise(sino, 0.03, 7)
        achieved = np.linalg.norm(noisy.values - sino.values) / np.linalg.norm(sino.values)
        assert np.isclose(achieved, 0.03, rtol=1e-12)

    def test_seed_determinism(self, small_projections, rng):
        sino = Sinogram(small_projections.scan, rng.random(6 * 41))
        a = add_noise(sino, 0.05, 123)
        b = add_noise(sino, 0.05, 123)
        c = add_noise(sino, 0.05, 124)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_rejects_negative_level(self, small_projections):
        sino = Sinogram(small_projections.scan, np.ones(6 * 41))
        with pytest.raises(ValueError):
            add_noise(sino, -0.1, 0)


class TestRelError:
    def test_examples(self, rng):
        x = rng.standard_normal(20)
        assert rel_error(x, x) == 0.0
        assert np.isclose(rel_error(np.zeros(20), x), 1.0)
        assert np.isclose(rel_error(2.0 * x, x), 1.0)

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            rel_error(np.ones(3), np.zeros(3))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rel_error(np.ones(3), np.ones(4))


class TestSinogramIO:
    def test_binary_round_trip(self, small_projections, tmp_path, rng):
        sino = Sinogram(small_projections.scan, rng.standard_normal(6 * 41))
        path = tmp_path / "data.sin"
        write_sinogram(sino, path)
        back = read_sinogram(path)
        assert np.array_equal(back.values, sino.values)
        assert np.array_equal(back.scan.angles, sino.scan.angles)
        assert np.array_equal(back.scan.radii, sino.scan.radii)

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.sin"
        path.write_bytes(b"WRONGMAG" + b"\0" * 16)
        with pytest.raises(ValueError, match="magic"):
            read_sinogram(path)

    def test_csv_one_row_per_angle(self, small_projections, tmp_path, rng):
        sino = Sinogram(small_projections.scan, rng.standard_normal(6 * 41))
        path = tmp_path / "data.csv"
        sinogram_to_csv(sino, path)
        lines = path.read_text().strip().split("\n")
        assert len(lines) == 6
        first = np.array([float(v) for v in lines[0].split(",")])
        assert np.array_equal(first, sino.block(0))

    def test_pgm_shape(self, small_projections, tmp_path, rng):
        sino = Sinogram(small_projections.scan, rng.standard_normal(6 * 41))
        path = tmp_path / "sino.pgm"
        sinogram_to_pgm(sino, path)
        assert path.read_bytes().startswith(b"P5\n41 6\n255\n")
