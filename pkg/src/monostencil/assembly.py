"""Global matrix of ``-L_h`` on a tensor mesh and its M-matrix diagnostics.

Unknowns are the interior nodes ``(i, j)`` in lexicographic order with
``j`` fastest.  Homogeneous or inhomogeneous Dirichlet data is eliminated:
the weights that multiply boundary nodes go into ``boundary_matrix`` and
the interior system is ``A u = f + B g``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg
import scipy.sparse

from .exceptions import CapacityError, DegenerateGeometryError, InvalidInputError, SingularMatrixError
from .feasibility import asymmetric_margin, explicit_family, monotonicity_margin
from .mesh import TensorMesh2D, local_geometry
from .stencil import (
    BETA_OFFSETS,
    AsymmetricCellGeometry,
    FreeParameters,
    Stencil9,
    solve_stencil,
    solve_stencil_asymmetric,
)

__all__ = [
    "DENSE_LIMIT",
    "MaxMargin",
    "ExplicitFamily",
    "Dos09Hybrid",
    "NodeProvenance",
    "AssembledSystem",
    "MMatrixReport",
    "DMPReport",
    "local_stencil",
    "five_point_parameters",
    "assemble",
    "m_matrix_check",
    "dmp_test",
    "dense_solve",
    "export_matrix_market",
]

DENSE_LIMIT = 4096

_NEIGHBOUR_STEPS = ((0, 0),) + BETA_OFFSETS


@dataclass(frozen=True)
class MaxMargin:
    """Nine-point stencil with the LP-optimal free parameters of the symmetrized cell."""

    name = "maxmargin"


@dataclass(frozen=True)
class ExplicitFamily:
    """Closed-form monotone witness where it exists, :class:`MaxMargin` elsewhere."""

    name = "family"


@dataclass(frozen=True)
class Dos09Hybrid:
    """Nine-point stencil only where the local ratio is at most ``ratio_threshold``.

    Elsewhere the mixed moment is set to 0 and the free parameters are the
    standard three-point weights, which makes all four corners vanish: a
    five-point stencil for ``u_xx + u_yy`` that ignores ``u_xy``.
    """

    ratio_threshold: float = 2.0
    name = "hybrid"

    def __post_init__(self):
        if not self.ratio_threshold >= 1.0:
            raise InvalidInputError(f"ratio_threshold must be >= 1, got {self.ratio_threshold!r}")


@dataclass(frozen=True)
class NodeProvenance:
    i: int
    j: int
    row: int
    branch: str
    geometry: AsymmetricCellGeometry
    free_params: FreeParameters
    stencil: Stencil9

    def as_dict(self) -> dict:
        return {
            "i": self.i,
            "j": self.j,
            "row": self.row,
            "branch": self.branch,
            "spacings": [self.geometry.H_minus, self.geometry.H_plus,
                         self.geometry.h_minus, self.geometry.h_plus],
            "stencil": self.stencil.as_dict(),
        }


@dataclass(eq=False)
class AssembledSystem:
    mesh: TensorMesh2D
    strategy: object
    matrix: np.ndarray
    boundary_matrix: np.ndarray
    boundary_nodes: list
    node_index: dict
    provenance: list = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nodes(self) -> list:
        """Interior ``(i, j)`` per row."""
        return [(p.i, p.j) for p in self.provenance]

    def rhs(self, f=None, g=None) -> np.ndarray:
        """Right-hand side ``f + B g``.

        ``f`` and ``g`` are arrays (interior / boundary ordering) or
        callables of ``(x, y)``; ``None`` means zero.
        """
        x, y = self.mesh.x_mesh.nodes, self.mesh.y_mesh.nodes
        out = np.zeros(self.n)
        if f is not None:
            if callable(f):
                ij = np.array(self.nodes)
                out += f(x[ij[:, 0]], y[ij[:, 1]])
            else:
                out += np.asarray(f, dtype=float)
        if g is not None:
            if callable(g):
                bij = np.array(self.boundary_nodes)
                g = g(x[bij[:, 0]], y[bij[:, 1]])
            out += self.boundary_matrix @ np.asarray(g, dtype=float)
        return out


@dataclass(frozen=True)
class MMatrixReport:
    sign_pattern_ok: bool
    diagonal_ok: bool
    violations: list
    inverse_nonneg: bool | None
    min_inverse_entry: float | None

    @property
    def is_m_matrix(self) -> bool:
        return self.sign_pattern_ok and bool(self.inverse_nonneg)

    def as_dict(self, limit: int | None = None) -> dict:
        viol = self.violations if limit is None else self.violations[:limit]
        return {
            "sign_pattern_ok": self.sign_pattern_ok,
            "diagonal_ok": self.diagonal_ok,
            "n_violations": len(self.violations),
            "violations": [{"row": r, "col": c, "value": v} for r, c, v in viol],
            "inverse_nonneg": self.inverse_nonneg,
            "min_inverse_entry": self.min_inverse_entry,
        }


@dataclass(frozen=True)
class DMPReport:
    passed: bool
    worst_violation: float
    trials: int
    n_failed: int
    seed: int | None

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_violation": self.worst_violation,
            "trials": self.trials,
            "n_failed": self.n_failed,
            "seed": self.seed,
        }


def five_point_parameters(geom: AsymmetricCellGeometry) -> FreeParameters:
    """Free parameters that make every corner weight vanish when ``u_xy`` is dropped."""
    hm, hp = geom.H_minus, geom.H_plus
    km, kp = geom.h_minus, geom.h_plus
    return FreeParameters(2.0 / (hp * (hm + hp)), 2.0 / (km * (km + kp)), 2.0 / (kp * (km + kp)))


def _nine_point(geom: AsymmetricCellGeometry, free: FreeParameters) -> Stencil9:
    if geom.is_symmetric:
        return solve_stencil(geom.symmetrized(), free)
    return solve_stencil_asymmetric(geom, free)


def _max_margin_params(geom: AsymmetricCellGeometry) -> FreeParameters:
    # Lifting the symmetrized optimum to a graded cell can leave negative
    # corners at layer transitions, so asymmetric nodes get their own LP.
    if geom.is_symmetric:
        return monotonicity_margin(geom.symmetrized()).argmax_params
    return asymmetric_margin(geom).argmax_params


def local_stencil(geom: AsymmetricCellGeometry, strategy) -> tuple[str, FreeParameters, Stencil9]:
    """Return ``(branch, free parameters, stencil of L)`` for one node."""
    sym = geom.symmetrized()
    if isinstance(strategy, Dos09Hybrid) and sym.anisotropy > strategy.ratio_threshold:
        free = five_point_parameters(geom)
        return "five-point", free, solve_stencil_asymmetric(geom, free, mixed_target=0.0)
    if isinstance(strategy, ExplicitFamily):
        if geom.is_symmetric and 0.5 <= sym.ratio <= 2.0:
            free = explicit_family(sym).free_parameters()
            return "nine-point-family", free, _nine_point(geom, free)
    elif not isinstance(strategy, (MaxMargin, Dos09Hybrid)):
        raise InvalidInputError(f"unknown scheme strategy {strategy!r}")
    free = _max_margin_params(geom)
    return "nine-point-maxmargin", free, _nine_point(geom, free)


def assemble(mesh: TensorMesh2D, strategy=None, dense_limit: int = DENSE_LIMIT) -> AssembledSystem:
    """Dense matrix of ``-L_h`` over the interior nodes of ``mesh``."""
    strategy = MaxMargin() if strategy is None else strategy
    nx, ny = mesh.shape
    mx, my = nx - 2, ny - 2
    n = mx * my
    if n > dense_limit:
        raise CapacityError(f"{n} interior unknowns exceed the dense limit of {dense_limit}")

    def row_of(i, j):
        return (i - 1) * my + (j - 1)

    node_index = {(i, j): row_of(i, j) for i in range(1, nx - 1) for j in range(1, ny - 1)}
    boundary_nodes = [(i, j) for i in range(nx) for j in range(ny)
                      if i in (0, nx - 1) or j in (0, ny - 1)]
    boundary_index = {ij: k for k, ij in enumerate(boundary_nodes)}

    a = np.zeros((n, n))
    b = np.zeros((n, len(boundary_nodes)))
    provenance = []
    for (i, j), row in node_index.items():
        geom = local_geometry(mesh, i, j)
        try:
            branch, free, st = local_stencil(geom, strategy)
        except DegenerateGeometryError as exc:
            raise DegenerateGeometryError(f"node ({i}, {j}): {exc}", node=(i, j)) from exc
        for (di, dj), c in zip(_NEIGHBOUR_STEPS, st.coefficients):
            nb = (i + di, j + dj)
            if nb in node_index:
                a[row, node_index[nb]] -= c
            else:
                b[row, boundary_index[nb]] += c
        provenance.append(NodeProvenance(i, j, row, branch, geom, free, st))
    return AssembledSystem(mesh, strategy, a, b, boundary_nodes, node_index, provenance)


def _lu(matrix):
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {matrix.shape}")
    if matrix.shape[0] > DENSE_LIMIT:
        raise CapacityError(f"matrix of order {matrix.shape[0]} exceeds the dense limit")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(matrix, check_finite=True)
    pivots = np.abs(np.diag(lu))
    if pivots.size and pivots.min() < 1e-300:
        k = int(np.argmin(pivots))
        raise SingularMatrixError(f"zero pivot at step {k} (|pivot| = {pivots[k]:.3e})")
    return lu, piv


def dense_solve(matrix, rhs) -> np.ndarray:
    """Solve ``matrix @ x = rhs`` by LU with partial pivoting; ``rhs`` may be 2-D."""
    lu, piv = _lu(matrix)
    return scipy.linalg.lu_solve((lu, piv), np.asarray(rhs, dtype=float))


def m_matrix_check(system, dense_limit: int = DENSE_LIMIT) -> MMatrixReport:
    """Sign pattern and (for small systems) entrywise nonnegativity of the inverse."""
    a = system.matrix if isinstance(system, AssembledSystem) else np.asarray(system, dtype=float)
    n = a.shape[0]
    tol_sign = 1e-12 * float(np.abs(a).max()) if a.size else 0.0
    diagonal_ok = bool(np.all(np.diag(a) > 0.0))
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    rows, cols = np.nonzero(off > tol_sign)
    violations = [(int(r), int(c), float(a[r, c])) for r, c in zip(rows, cols)]
    inverse_nonneg = min_entry = None
    if n <= dense_limit:
        inv = dense_solve(a, np.eye(n))
        min_entry = float(inv.min())
        inverse_nonneg = bool(min_entry >= -1e-9 * float(np.abs(inv).max()))
    return MMatrixReport(
        sign_pattern_ok=diagonal_ok and not violations,
        diagonal_ok=diagonal_ok,
        violations=violations,
        inverse_nonneg=inverse_nonneg,
        min_inverse_entry=min_entry,
    )


def dmp_test(system, trials: int = 100, seed: int | None = 0, f=None) -> DMPReport:
    """Solve with random ``f >= 0`` and zero boundary data; check ``u >= 0``.

    A trial fails when ``min u < -1e-10 * max|u|``.  Passing ``f`` (shape
    ``(n,)`` or ``(n, k)``) replaces the random draws.
    """
    a = system.matrix if isinstance(system, AssembledSystem) else np.asarray(system, dtype=float)
    n = a.shape[0]
    if f is None:
        if trials < 1:
            raise InvalidInputError("need at least one trial")
        f = np.random.default_rng(seed).uniform(0.0, 1.0, size=(n, trials))
    f = np.asarray(f, dtype=float).reshape(n, -1)
    u = dense_solve(a, f)
    scale = np.abs(u).max(axis=0)
    low = u.min(axis=0)
    failed = low < -1e-10 * scale
    return DMPReport(
        passed=not bool(failed.any()),
        worst_violation=float(max(0.0, -low.min())),
        trials=f.shape[1],
        n_failed=int(failed.sum()),
        seed=seed,
    )


def export_matrix_market(system, path, comment: str = "") -> Path:
    """Write the matrix in MatrixMarket coordinate (real, general) format."""
    a = system.matrix if isinstance(system, AssembledSystem) else np.asarray(system, dtype=float)
    path = Path(path)
    scipy.io.mmwrite(str(path), scipy.sparse.coo_matrix(a), comment=comment,
                     field="real", symmetry="general", precision=17)
    return path
