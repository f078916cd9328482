import numpy as np
import pytest

import patmoco
from patmoco.config import profile_config


@pytest.fixture(scope="session")
def small_grid():
    return patmoco.make_grid(48, 0.5)


@pytest.fixture(scope="session")
def small_scan():
    return patmoco.make_scan(6, 0.0, 60.0, 41, 2.0)


@pytest.fixture(scope="session")
def small_projections(small_grid, small_scan):
    return patmoco.assemble_all(small_grid, small_scan)


@pytest.fixture(scope="session")
def desk():
    """Desk-profile problem shared by the slower tests.

    Bundles the assembled projections, phantom, true motion, and the noisy
    sinogram at the configured 3% level.
    """
    cfg = profile_config("desk")
    pset = patmoco.assemble_all(cfg.grid(), cfg.scan(), cfg.oversample)
    phantom = cfg.phantom()
    gamma_true = cfg.gamma_true()
    motion_true = patmoco.MotionParams(gamma_true, cfg.baseline_c)
    op_true = patmoco.ForwardOperator(pset, motion_true)
    sino_true = patmoco.forward_apply(op_true, phantom)
    sino_noisy = patmoco.add_noise(sino_true, cfg.noise_level, cfg.seed)
    return {
        "cfg": cfg,
        "projections": pset,
        "phantom": phantom,
        "gamma_true": gamma_true,
        "motion_true": motion_true,
        "op_true": op_true,
        "sino_true": sino_true,
        "sino_noisy": sino_noisy,
    }


@pytest.fixture()
def rng():
    return np.random.default_rng(20240811)
