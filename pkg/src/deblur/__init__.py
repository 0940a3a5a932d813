"""Image deblurring: Gaussian blur operators, SVD filtering, Tikhonov and TV
regularization, parameter choice and Haar multilevel coarsening."""
from .errors import *  # noqa: F401,F403
from .image import ErrorReport, read_pgm, relative_error, unvec, vec, write_pgm
from .psf import GaussianPsf, gaussian_psf_2d, generate_test_image
from .operators import (BccbOperator, BlurOperator, BoundaryCondition, CirculantMatrix,
                        DenseOperator, ReflexiveOperator, SeparableOperator, ToeplitzMatrix,
                        assemble_dense, build_operator)
from .noise import NoiseSpec, add_gaussian_white, add_poisson, add_salt_pepper, apply_noise
from .svd import TSVD, DenseSvd, KronSvd, Naive, Tikhonov, filtered_solve, picard_coefficients, svd_of
from .regularization import (FirstDerivative2D, IrlsOptions, general_tikhonov_solve,
                             tikhonov_fft_solve, tikhonov_separable_solve, tv_irls_solve)
from .param_select import discrepancy_lambda, discrepancy_search, lcurve_corner, lcurve_scan
from .multilevel import (build_hierarchy, coarsen_circulant, coarsen_toeplitz, haar_w1,
                         multilevel_solve, restrict_image)

__version__ = "0.1.0"
