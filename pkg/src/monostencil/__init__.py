"""Consistent nine-point stencils for u_xx + u_xy + u_yy on anisotropic cells.

Submodules
----------
stencil      closed-form consistent stencils and their moment checks
feasibility  monotonicity margin LP, threshold, brute-force oracle
mesh         uniform / Shishkin / Bakhvalov meshes, per-node classification
assembly     global -L_h, M-matrix and discrete maximum principle checks
cli          ``monostencil`` command
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    CapacityError,
    DegenerateGeometryError,
    InvalidInputError,
    MonostencilError,
    OutOfRangeError,
    SingularMatrixError,
)
from .stencil import (  # noqa: E402
    AsymmetricCellGeometry,
    CellGeometry,
    FreeParameters,
    Stencil9,
    apply_stencil,
    beta6_identity_gap,
    moment_residuals,
    solve_stencil,
    solve_stencil_asymmetric,
)
from .feasibility import (  # noqa: E402
    brute_force_margin,
    explicit_family,
    feasibility_threshold,
    is_feasible,
    monotonicity_margin,
)
