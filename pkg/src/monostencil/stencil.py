"""First-order-consistent nine-point stencils for ``L u = u_xx + u_xy + u_yy``.

A stencil on the cell ``(x0-H, x0+H) x (y0-h, y0+h)`` is

    L_{H,h} u = alpha*u(x0, y0) + sum_i beta_i * u(x0 + dx_i, y0 + dy_i)

with the position map frozen in :data:`BETA_OFFSETS`::

    beta1 (-H, 0)   beta2 (+H, 0)   beta3 (0, -h)   beta4 (0, +h)
    beta5 (-H, -h)  beta6 (+H, -h)  beta7 (-H, +h)  beta8 (+H, +h)

Consistency means the stencil reproduces ``L`` on every polynomial of
total degree <= 2.  That gives six linear conditions on nine unknowns,
so fixing ``beta2, beta3, beta4`` determines the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable, Sequence

import numpy as np

from .exceptions import DegenerateGeometryError, InvalidInputError

__all__ = [
    "BETA_OFFSETS",
    "CellGeometry",
    "AsymmetricCellGeometry",
    "FreeParameters",
    "Stencil9",
    "MomentResiduals",
    "solve_stencil",
    "solve_stencil_asymmetric",
    "moment_residuals",
    "apply_stencil",
    "sample_points",
    "beta6_identity_gap",
    "affine_map",
    "truncation_order_estimate",
]

#: Unit offsets (sign of x-step, sign of y-step) of beta1..beta8.
BETA_OFFSETS = (
    (-1, 0),
    (1, 0),
    (0, -1),
    (0, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
    (1, 1),
)


def _check_finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise InvalidInputError(f"{name} must be finite, got {value!r}")
    return value


def _check_positive(name, value):
    value = _check_finite(name, value)
    if value <= 0.0:
        raise InvalidInputError(f"{name} must be > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class CellGeometry:
    """Symmetric cell: half-spacing ``H`` in x and ``h`` in y."""

    H: float
    h: float

    def __post_init__(self):
        object.__setattr__(self, "H", _check_positive("H", self.H))
        object.__setattr__(self, "h", _check_positive("h", self.h))

    @property
    def ratio(self) -> float:
        """The aspect ratio ``s = h / H``."""
        return self.h / self.H

    @property
    def anisotropy(self) -> float:
        """``max(H/h, h/H)``, always >= 1."""
        return max(self.H / self.h, self.h / self.H)

    def transposed(self) -> CellGeometry:
        return CellGeometry(self.h, self.H)

    def to_asymmetric(self) -> AsymmetricCellGeometry:
        return AsymmetricCellGeometry(self.H, self.H, self.h, self.h)

    def offsets(self) -> np.ndarray:
        """(8, 2) array of the physical offsets of beta1..beta8."""
        return np.array(BETA_OFFSETS, dtype=float) * np.array([self.H, self.h])


@dataclass(frozen=True)
class AsymmetricCellGeometry:
    """Cell whose neighbours sit at different distances on each side."""

    H_minus: float
    H_plus: float
    h_minus: float
    h_plus: float

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _check_positive(f.name, getattr(self, f.name)))

    @property
    def is_symmetric(self) -> bool:
        # spacings of k/N meshes differ by rounding only
        return (math.isclose(self.H_minus, self.H_plus, rel_tol=1e-12)
                and math.isclose(self.h_minus, self.h_plus, rel_tol=1e-12))

    def symmetrized(self) -> CellGeometry:
        """Per-direction maxima ``(max(H-, H+), max(h-, h+))``."""
        return CellGeometry(max(self.H_minus, self.H_plus), max(self.h_minus, self.h_plus))

    def transposed(self) -> AsymmetricCellGeometry:
        return AsymmetricCellGeometry(self.h_minus, self.h_plus, self.H_minus, self.H_plus)

    def offsets(self) -> np.ndarray:
        xs = {-1: -self.H_minus, 0: 0.0, 1: self.H_plus}
        ys = {-1: -self.h_minus, 0: 0.0, 1: self.h_plus}
        return np.array([(xs[sx], ys[sy]) for sx, sy in BETA_OFFSETS])


@dataclass(frozen=True)
class FreeParameters:
    """The free coefficients ``beta2, beta3, beta4`` (units 1/length^2)."""

    beta2: float
    beta3: float
    beta4: float

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _check_finite(f.name, getattr(self, f.name)))

    def as_array(self) -> np.ndarray:
        return np.array([self.beta2, self.beta3, self.beta4])

    def scaled(self, factor: float) -> FreeParameters:
        return FreeParameters(self.beta2 * factor, self.beta3 * factor, self.beta4 * factor)


@dataclass(frozen=True)
class Stencil9:
    """Nine stencil weights plus the geometry they were built for."""

    alpha: float
    beta1: float
    beta2: float
    beta3: float
    beta4: float
    beta5: float
    beta6: float
    beta7: float
    beta8: float
    geometry: CellGeometry | AsymmetricCellGeometry

    @classmethod
    def from_arrays(cls, alpha, betas, geometry):
        betas = [float(b) for b in betas]
        if len(betas) != 8:
            raise InvalidInputError(f"expected 8 off-center weights, got {len(betas)}")
        return cls(float(alpha), *betas, geometry=geometry)

    @property
    def betas(self) -> np.ndarray:
        return np.array(
            [self.beta1, self.beta2, self.beta3, self.beta4,
             self.beta5, self.beta6, self.beta7, self.beta8]
        )

    @property
    def coefficients(self) -> np.ndarray:
        """All nine weights, center first, in :func:`sample_points` order."""
        return np.concatenate(([self.alpha], self.betas))

    @property
    def min_beta(self) -> float:
        return float(self.betas.min())

    def free_parameters(self) -> FreeParameters:
        return FreeParameters(self.beta2, self.beta3, self.beta4)

    def scaled(self, factor: float) -> Stencil9:
        return Stencil9.from_arrays(self.alpha * factor, self.betas * factor, self.geometry)

    def as_dict(self) -> dict:
        out = {"alpha": self.alpha}
        out.update({f"beta{i}": float(b) for i, b in enumerate(self.betas, start=1)})
        return out


@dataclass(frozen=True)
class MomentResiduals:
    """Signed residuals ``r0..r5`` (left side minus right side).

    ``scales`` holds, per condition, the magnitude of the terms that were
    summed; ``max_relative`` divides by it so that the check is
    independent of the cell size.
    """

    r0: float
    r1: float
    r2: float
    r3: float
    r4: float
    r5: float
    scales: tuple

    def as_array(self) -> np.ndarray:
        return np.array([self.r0, self.r1, self.r2, self.r3, self.r4, self.r5])

    def max_relative(self) -> float:
        scales = np.maximum(np.asarray(self.scales, dtype=float), np.finfo(float).tiny)
        return float(np.max(np.abs(self.as_array()) / scales))


def solve_stencil(geom: CellGeometry, free: FreeParameters) -> Stencil9:
    """Return the unique consistent stencil with the given ``beta2, beta3, beta4``.

    ``beta1`` comes from the second-moment conditions themselves: the
    corner sum is fixed by the y-condition and then the x-condition fixes
    ``beta1``.  The corner weights follow from inverting the sign pattern
    of the first-moment and mixed-moment conditions.

    >>> st = solve_stencil(CellGeometry(1.0, 1.0), FreeParameters(0.5, 0.5, 0.5))
    >>> st.beta5, st.beta6, st.beta7, st.beta8, st.alpha
    (0.5, 0.0, 0.0, 0.5, -3.0)
    """
    if not isinstance(geom, CellGeometry):
        raise InvalidInputError("solve_stencil needs a CellGeometry")
    H, h = geom.H, geom.h
    b2, b3, b4 = free.beta2, free.beta3, free.beta4

    corner_sum = 2.0 / h**2 - b3 - b4
    b1 = 2.0 / H**2 - b2 - corner_sum
    a = b1 - b2
    bv = b3 - b4
    c = 1.0 / (h * H)
    b5 = (corner_sum - a - bv + c) / 4.0
    b6 = (corner_sum + a - bv - c) / 4.0
    b7 = (corner_sum - a + bv - c) / 4.0
    b8 = (corner_sum + a + bv + c) / 4.0
    alpha = -(b1 + b2 + b3 + b4 + b5 + b6 + b7 + b8)
    return Stencil9(alpha, b1, b2, b3, b4, b5, b6, b7, b8, geometry=geom)


def solve_stencil_asymmetric(
    geom: AsymmetricCellGeometry | CellGeometry,
    free: FreeParameters,
    mixed_target: float = 1.0,
) -> Stencil9:
    """Consistent stencil on a cell with per-side spacings.

    Matches ``sum c = 0``, both first moments ``= 0``, both halved second
    moments ``= 1`` and the mixed moment ``sum c*dx*dy = mixed_target``.
    ``mixed_target=0`` gives the stencil that ignores ``u_xy``.

    The system is eliminated in closed form: column sums from the x
    moments, row sums from the y moments, then the single remaining
    corner unknown from the mixed moment.  Every divisor is a product of
    positive spacings.
    """
    if isinstance(geom, CellGeometry):
        geom = geom.to_asymmetric()
    mixed_target = _check_finite("mixed_target", mixed_target)
    betas = _asymmetric_betas(geom, free.beta2, free.beta3, free.beta4, mixed_target, 2.0)
    st = Stencil9.from_arrays(-sum(betas), betas, geom)
    if not np.all(np.isfinite(st.coefficients)):
        raise DegenerateGeometryError(f"moment system is singular for {geom}")
    return st


def _asymmetric_betas(geom, b2, b3, b4, mixed_target, second_target):
    hm_x, hp_x = geom.H_minus, geom.H_plus
    hm_y, hp_y = geom.h_minus, geom.h_plus

    # column sums: left (b1+b5+b7) and right (b2+b6+b8)
    left_col = second_target / (hm_x * (hm_x + hp_x))
    right_corners = second_target / (hp_x * (hm_x + hp_x)) - b2
    # row sums of the corners: lower (b5+b6) and upper (b7+b8)
    w = second_target - hm_y**2 * b3 - hp_y**2 * b4
    y = hm_y * b3 - hp_y * b4
    lower = (w - hp_y * y) / (hm_y * (hm_y + hp_y))
    upper = (w + hm_y * y) / (hp_y * (hm_y + hp_y))

    denom = (hm_x + hp_x) * (hm_y + hp_y)
    b8 = (
        mixed_target
        - hm_x * hm_y * (lower - right_corners)
        + hp_x * hm_y * right_corners
        + hm_x * hp_y * upper
    ) / denom
    b7 = upper - b8
    b6 = right_corners - b8
    b5 = lower - b6
    b1 = left_col - b5 - b7
    return [b1, b2, b3, b4, b5, b6, b7, b8]


def moment_residuals(st: Stencil9) -> MomentResiduals:
    """Residuals of the six consistency conditions for ``st``.

    On a :class:`CellGeometry` the conditions are taken literally in the
    form ``alpha + sum beta = 0``, ``beta2 - beta1 + beta6 + beta8 -
    (beta5 + beta7) = 0``, ..., ``hH(beta5 - beta7 + beta8 - beta6) = 1``.
    On an :class:`AsymmetricCellGeometry` the raw moments are used:
    ``sum c dx``, ``sum c dy``, ``sum c dx^2/2 - 1``, ``sum c dy^2/2 - 1``
    and ``sum c dx dy - 1``.
    """
    geom = st.geometry
    if isinstance(geom, CellGeometry):
        return _symmetric_residuals(st, geom.H, geom.h)
    b = st.betas
    off = geom.offsets()
    rows = [off[:, 0], off[:, 1], 0.5 * off[:, 0] ** 2, 0.5 * off[:, 1] ** 2, off[:, 0] * off[:, 1]]
    targets = [0.0, 0.0, 1.0, 1.0, 1.0]
    res = [st.alpha + b.sum()] + [float(wk @ b) - t for wk, t in zip(rows, targets)]
    scales = [abs(st.alpha) + np.abs(b).sum()] + [
        float(np.abs(wk) @ np.abs(b)) + t for wk, t in zip(rows, targets)
    ]
    return MomentResiduals(*(float(r) for r in res), scales=tuple(float(x) for x in scales))


def _symmetric_residuals(st, H, h):
    b1, b2, b3, b4 = st.beta1, st.beta2, st.beta3, st.beta4
    b5, b6, b7, b8 = st.beta5, st.beta6, st.beta7, st.beta8
    a1, a2, a3, a4 = abs(b1), abs(b2), abs(b3), abs(b4)
    a5, a6, a7, a8 = abs(b5), abs(b6), abs(b7), abs(b8)
    corners = a5 + a6 + a7 + a8
    r0 = st.alpha + b1 + b2 + b3 + b4 + b5 + b6 + b7 + b8
    r1 = b2 - b1 + b6 + b8 - (b5 + b7)
    r2 = b4 - b3 + b7 + b8 - (b5 + b6)
    r3 = 0.5 * H * H * (b1 + b2 + b5 + b6 + b7 + b8) - 1.0
    r4 = 0.5 * h * h * (b3 + b4 + b5 + b6 + b7 + b8) - 1.0
    r5 = h * H * (b5 - b7 + b8 - b6) - 1.0
    scales = (
        abs(st.alpha) + a1 + a2 + a3 + a4 + corners,
        a1 + a2 + corners,
        a3 + a4 + corners,
        0.5 * H * H * (a1 + a2 + corners) + 1.0,
        0.5 * h * h * (a3 + a4 + corners) + 1.0,
        h * H * corners + 1.0,
    )
    return MomentResiduals(r0, r1, r2, r3, r4, r5, scales=scales)


def sample_points(geom, x0: float = 0.0, y0: float = 0.0) -> np.ndarray:
    """(9, 2) coordinates: the center followed by the beta1..beta8 positions."""
    return np.vstack(([0.0, 0.0], geom.offsets())) + np.array([x0, y0])


def apply_stencil(st: Stencil9, u: Sequence[float]) -> float:
    """Weighted sum ``alpha*u_center + sum beta_i*u_i``.

    ``u`` lists the nine sampled values in :func:`sample_points` order.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (9,):
        raise InvalidInputError(f"expected 9 sampled values, got shape {u.shape}")
    return float(st.coefficients @ u)


def beta6_identity_gap(st: Stencil9) -> float:
    """``beta6 + 1/(2hH) - beta8 - (beta4 - beta3)/2``; zero for consistent stencils."""
    geom = st.geometry
    if not isinstance(geom, CellGeometry):
        raise InvalidInputError("the beta6 identity is stated for symmetric cells only")
    return st.beta6 + 1.0 / (2.0 * geom.h * geom.H) - st.beta8 - 0.5 * (st.beta4 - st.beta3)


_UNIT = CellGeometry(1.0, 1.0)
_ZERO = FreeParameters(0.0, 0.0, 0.0)
# The linear part of (beta2, beta3, beta4) -> beta does not depend on the
# geometry; on the unit cell every entry is a multiple of 1/4, so exact.
_LINEAR_PART = np.column_stack(
    [solve_stencil(_UNIT, FreeParameters(*e)).betas - solve_stencil(_UNIT, _ZERO).betas
     for e in np.eye(3)]
)


def affine_map(geom: CellGeometry | AsymmetricCellGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(M, b)`` with ``betas = M @ [beta2, beta3, beta4] + b``.

    For asymmetric cells the linear part is obtained with every moment
    target set to zero, so no large offsets are subtracted.
    """
    if isinstance(geom, CellGeometry):
        return _LINEAR_PART.copy(), solve_stencil(geom, _ZERO).betas
    cols = [_asymmetric_betas(geom, *e, 0.0, 0.0) for e in np.eye(3)]
    offset = _asymmetric_betas(geom, 0.0, 0.0, 0.0, 1.0, 2.0)
    return np.array(cols).T, np.array(offset)


def truncation_order_estimate(
    func: Callable[[np.ndarray, np.ndarray], np.ndarray],
    exact: Callable[[float, float], float],
    *,
    ratio: float = 0.5,
    H0: float = 0.25,
    levels: int = 5,
    center: tuple = (0.1, 0.2),
    free: Callable[[CellGeometry], FreeParameters] | None = None,
) -> float:
    """Observed order of ``|L_{H,h} u - L u|`` under refinement at fixed ``h/H``.

    ``func(x, y)`` evaluates ``u`` (vectorised), ``exact(x0, y0)`` gives
    ``(u_xx + u_xy + u_yy)(x0, y0)``.  ``free`` picks the free parameters for
    each cell; the default is the max-margin choice.  Returns the least
    squares slope of ``log error`` against ``log H``, or ``math.inf`` when
    every error is at rounding level (degree-2 exactness).
    """
    if levels < 4:
        raise InvalidInputError("need at least 4 refinement levels")
    ratio = _check_positive("ratio", ratio)
    H0 = _check_positive("H0", H0)
    if free is None:
        from .feasibility import monotonicity_margin

        def free(g):
            return monotonicity_margin(g).argmax_params

    x0, y0 = center
    target = exact(x0, y0)
    steps, errors = [], []
    for k in range(levels):
        geom = CellGeometry(H0 / 2**k, ratio * H0 / 2**k)
        st = solve_stencil(geom, free(geom))
        pts = sample_points(geom, x0, y0)
        vals = np.asarray(func(pts[:, 0], pts[:, 1]), dtype=float)
        err = abs(apply_stencil(st, vals) - target)
        noise = 64 * np.finfo(float).eps * (float(np.abs(st.coefficients) @ np.abs(vals)) + abs(target))
        if err > noise:
            steps.append(geom.H)
            errors.append(err)
    if len(errors) < 2:
        return math.inf
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)
