"""Motion-corrected 2-D photoacoustic tomography.

Builds sparse circular-Radon projection operators composed with parameterized
vertical-stretch deformations and solves the separable nonlinear least-squares
problem for joint motion estimation and image reconstruction by Gauss-Newton
variable projection with hybrid-Krylov regularized inner solves.
"""

from . import kernels
from .config import ExperimentConfig, load_config, parse_config, profile_config
from .forward import (
    ForwardOperator,
    Sinogram,
    add_noise,
    forward_adjoint,
    forward_apply,
    read_sinogram,
    rel_error,
    write_sinogram,
)
from .geometry import (
    Ellipse,
    Image,
    ImageGrid,
    ScanGeometry,
    default_phantom_shapes,
    gaussian_image,
    make_grid,
    make_phantom,
    make_scan,
    read_image,
    write_image,
    write_pgm,
)
from .krylov import (
    MatrixOperator,
    SolveReport,
    hybrid_lsqr,
    lsqr,
    projected_tikhonov,
    wgcv_select,
)
from .motion import MotionParams, stretch_apply_derivative, stretch_matrix
from .radon import (
    ProjectionSet,
    assemble_all,
    assemble_projection,
    load_or_assemble,
    read_projection_cache,
    write_projection_cache,
)
from .sparse import SparseMatrix
from .theory import (
    StretchProfile,
    bolker_bound_check,
    c_epsilon,
    continuous_forward_oracle,
    deformed_support_eps,
    visibility_check,
)
from .varpro import GNConfig, GNReport, gauss_newton, gn_step, jacobian_columns

__version__ = "0.1.0"
