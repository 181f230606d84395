"""Existence of monotone consistent stencils and the max-min margin.

For a cell ``(H, h)`` the margin is

    mu(H, h) = max over (beta2, beta3, beta4) of min_i beta_i

where ``beta_i`` is the affine map produced by :func:`solve_stencil`.  A
monotone stencil (all off-center weights >= 0) exists iff ``mu >= 0``.

The LP ``max t s.t. beta_i(x) >= t`` has four unknowns, so it is solved
exactly by enumerating the basic solutions of its 16 constraints (eight
margin rows plus eight box rows).  :func:`brute_force_margin` is an
independent grid-search oracle that never looks at the LP.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple

import numpy as np

from .exceptions import InvalidInputError, MonostencilError, OutOfRangeError
from .stencil import (
    AsymmetricCellGeometry,
    CellGeometry,
    FreeParameters,
    Stencil9,
    affine_map,
    solve_stencil,
    solve_stencil_asymmetric,
)

__all__ = [
    "FeasibilityReport",
    "SweepRow",
    "feasibility_tolerance",
    "monotonicity_margin",
    "asymmetric_margin",
    "is_feasible",
    "feasibility_threshold",
    "explicit_family",
    "brute_force_margin",
    "margin_sweep",
]

# 16 choose 4 candidate active sets, fixed once.
_ACTIVE_SETS = np.array(list(itertools.combinations(range(16), 4)))


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of the margin LP for one cell."""

    geometry: CellGeometry | AsymmetricCellGeometry
    feasible: bool
    margin: float
    argmax_params: FreeParameters
    binding_indices: tuple
    method: str = "vertex-enumeration"

    @property
    def normalized_margin(self) -> float:
        """``mu * h * H``, which depends on the aspect ratio only."""
        g = self.geometry
        if isinstance(g, AsymmetricCellGeometry):
            g = g.symmetrized()
        return self.margin * g.h * g.H

    @property
    def stencil(self) -> Stencil9:
        if isinstance(self.geometry, AsymmetricCellGeometry):
            return solve_stencil_asymmetric(self.geometry, self.argmax_params)
        return solve_stencil(self.geometry, self.argmax_params)

    def as_dict(self) -> dict:
        g = self.geometry
        geom = {"H": g.H, "h": g.h} if isinstance(g, CellGeometry) else {
            "H_minus": g.H_minus, "H_plus": g.H_plus, "h_minus": g.h_minus, "h_plus": g.h_plus}
        return {
            **geom,
            "feasible": self.feasible,
            "margin": self.margin,
            "normalized_margin": self.normalized_margin,
            "argmax_params": {
                "beta2": self.argmax_params.beta2,
                "beta3": self.argmax_params.beta3,
                "beta4": self.argmax_params.beta4,
            },
            "binding_indices": list(self.binding_indices),
            "method": self.method,
            "stencil": self.stencil.as_dict(),
        }


class SweepRow(NamedTuple):
    ratio: float
    normalized_margin: float
    feasible: bool


def feasibility_tolerance(geom: CellGeometry) -> float:
    """Scale-aware tolerance ``1e-12 / (hH)``."""
    return 1e-12 / (geom.h * geom.H)


def _vertex_enumeration(m, b, free_box, t_low, t_high):
    """Best vertex of ``max t s.t. m x + b >= t`` inside the box.

    Returns ``(x, active_box)`` where ``active_box`` says whether a box row
    is tight at the chosen vertex.
    """
    g = np.vstack([
        np.hstack([-m, np.ones((8, 1))]),
        np.vstack([_EYE4[:3], -_EYE4[:3], _EYE4[3], -_EYE4[3]]),
    ])
    d = np.concatenate([b, [free_box] * 6 + [t_high, t_low]])
    mats = g[_ACTIVE_SETS]
    rhs = d[_ACTIVE_SETS]
    sv = np.linalg.svd(mats, compute_uv=False)
    ok = sv[:, -1] > 1e-12 * sv[:, 0]
    verts = np.linalg.solve(mats[ok], rhs[ok][..., None])[..., 0]

    size = max(1.0, float(np.abs(d).max()))
    slack = verts @ g.T - d
    feasible = np.all(slack <= 1e-9 * size, axis=1)
    if not feasible.any():
        raise MonostencilError("margin LP has no feasible vertex")
    verts, slack = verts[feasible], slack[feasible]

    t_best = verts[:, 3].max()
    tie = np.flatnonzero(verts[:, 3] >= t_best - 1e-12 * size)
    order = np.lexsort((verts[tie, 2], verts[tie, 1], verts[tie, 0]))
    k = tie[order[0]]
    # the upper bound on t is a valid a-priori bound, so it may be tight
    box_rows = np.r_[8:14, 15]
    active_box = bool(np.any(np.abs(slack[k, box_rows]) <= 1e-9 * size))
    return verts[k, :3], active_box


_EYE4 = np.eye(4)


def _solve_margin_lp(geom, sym: CellGeometry):
    """Free parameters maximising ``min beta`` for ``geom`` (symmetric or not).

    Works in units of ``1/(hH)`` of the symmetrized cell.  With
    ``t >= -4/(hH)`` the second-moment conditions pin every weight, so the
    free-parameter box only bounds the polytope; if a box row is ever tight
    the box is enlarged and the LP re-solved.
    """
    scale = sym.h * sym.H
    m, b = affine_map(geom)
    b = b * scale
    spacing = min(sym.H, sym.h)
    if not isinstance(geom, CellGeometry):
        spacing = min(geom.H_minus, geom.H_plus, geom.h_minus, geom.h_plus)
    free_box = 4.0 * scale / spacing**2 + 24.0
    t_low = 4.0
    if isinstance(geom, CellGeometry):
        # min of six weights whose sum is 2/H^2
        t_high = scale / (3.0 * sym.H**2)
    else:
        t_high = free_box
    for _ in range(8):
        x, active = _vertex_enumeration(m, b, free_box, t_low, t_high)
        if not active:
            break
        free_box *= 16.0
        t_low *= 16.0
    else:
        raise MonostencilError(f"margin LP stays box-limited for {geom}")
    return FreeParameters(*(x / scale))


def _report(geom, sym, params, st, method="vertex-enumeration"):
    betas = st.betas
    margin = float(betas.min())
    inv_scale = 1.0 / (sym.h * sym.H)
    binding = tuple(int(i) + 1 for i in np.flatnonzero(betas - margin <= 1e-9 * inv_scale))
    return FeasibilityReport(
        geometry=geom,
        feasible=margin >= -feasibility_tolerance(sym),
        margin=margin,
        argmax_params=params,
        binding_indices=binding,
        method=method,
    )


@lru_cache(maxsize=4096)
def _margin_cached(H: float, h: float) -> FeasibilityReport:
    geom = CellGeometry(H, h)
    params = _solve_margin_lp(geom, geom)
    return _report(geom, geom, params, solve_stencil(geom, params))


@lru_cache(maxsize=4096)
def _asym_margin_cached(key) -> FeasibilityReport:
    geom = AsymmetricCellGeometry(*key)
    sym = geom.symmetrized()
    params = _solve_margin_lp(geom, sym)
    return _report(geom, sym, params, solve_stencil_asymmetric(geom, params))


def asymmetric_margin(geom: AsymmetricCellGeometry) -> FeasibilityReport:
    """Max-min margin of the per-side stencil of :func:`solve_stencil_asymmetric`.

    The margin is reported in absolute units; feasibility uses the
    tolerance of the symmetrized cell.
    """
    if isinstance(geom, CellGeometry):
        geom = geom.to_asymmetric()
    return _asym_margin_cached((geom.H_minus, geom.H_plus, geom.h_minus, geom.h_plus))


def monotonicity_margin(geom: CellGeometry) -> FeasibilityReport:
    """Solve the max-min LP exactly by vertex enumeration.

    Ties among optimal vertices are broken by the lexicographic order of
    ``(beta2, beta3, beta4)``.
    """
    return _margin_cached(geom.H, geom.h)


def is_feasible(geom: CellGeometry) -> bool:
    """True iff a consistent stencil with every ``beta_i >= 0`` exists (to tolerance)."""
    return monotonicity_margin(geom).feasible


def feasibility_threshold(tol: float = 1e-9, bracket: tuple = (1.0, 16.0)) -> float:
    """Aspect ratio ``r = H/h`` (with ``h = 1``) at which the margin changes sign."""
    lo, hi = bracket
    if monotonicity_margin(CellGeometry(lo, 1.0)).margin <= 0.0 or \
            monotonicity_margin(CellGeometry(hi, 1.0)).margin >= 0.0:
        raise MonostencilError(f"margin does not change sign on [{lo}, {hi}]")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if monotonicity_margin(CellGeometry(mid, 1.0)).margin >= 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def explicit_family(geom: CellGeometry) -> Stencil9:
    """Closed-form monotone stencil, valid for ``1/2 <= h/H <= 2``.

    Corners ``beta5 = beta8 = 1/(2hH)`` carry the whole mixed derivative;
    ``beta6 = beta7 = 0``; the axis weights absorb the remainder.
    """
    s = geom.ratio
    if not 0.5 <= s <= 2.0:
        raise OutOfRangeError(f"explicit family needs 1/2 <= h/H <= 2, got h/H = {s!r}")
    H, h = geom.H, geom.h
    corner = 1.0 / (2.0 * h * H)
    bx = 1.0 / H**2 - corner
    by = 1.0 / h**2 - corner
    alpha = -(2.0 * bx + 2.0 * by + 2.0 * corner)
    return Stencil9(alpha, bx, bx, by, by, corner, 0.0, 0.0, corner, geometry=geom)


def _default_box(geom: CellGeometry):
    k = 1.0 / (geom.h * geom.H)
    lo = -2.0 * k
    return [
        (lo, 4.0 * k + 2.0 / geom.H**2),
        (lo, 4.0 * k + 2.0 / geom.h**2),
        (lo, 4.0 * k + 2.0 / geom.h**2),
    ]


def _grid_best(geom, axes):
    m, b = affine_map(geom)
    g2, g3, g4 = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g2.ravel(), g3.ravel(), g4.ravel()], axis=1)
    mins = (pts @ m.T + b).min(axis=1)
    k = int(np.argmax(mins))
    return float(mins[k]), pts[k]


def brute_force_margin(
    geom: CellGeometry,
    resolution: int = 41,
    box: Iterable | None = None,
    axes: Iterable | None = None,
    refine: int = 0,
) -> float:
    """Grid-search lower bound on the margin.

    Evaluates ``min_i beta_i`` on a ``resolution^3`` grid of
    ``(beta2, beta3, beta4)`` and returns the best value.  ``axes`` replaces
    the grid by explicit per-axis samples.  ``refine > 0`` repeats the
    search on a box of +/- two grid steps around the incumbent, which only
    ever raises the returned value; every value returned is attained by an
    actual stencil, so it never exceeds the LP optimum.
    """
    if axes is not None:
        axes = [np.asarray(a, dtype=float) for a in axes]
        if len(axes) != 3 or any(a.size == 0 for a in axes):
            raise InvalidInputError("axes must be three non-empty sequences")
        return _grid_best(geom, axes)[0]
    if resolution < 2:
        raise InvalidInputError(f"grid resolution must be >= 2, got {resolution}")
    box = _default_box(geom) if box is None else [tuple(map(float, ab)) for ab in box]
    if len(box) != 3 or any(not b > a for a, b in box):
        raise InvalidInputError("box must give three non-empty intervals")

    best, where = -math.inf, None
    for _ in range(refine + 1):
        axes = [np.linspace(a, b, resolution) for a, b in box]
        val, pt = _grid_best(geom, axes)
        if val > best:
            best, where = val, pt
        steps = [(b - a) / (resolution - 1) for a, b in box]
        box = [(c - 2 * s, c + 2 * s) for c, s in zip(where, steps)]
    return best


def margin_sweep(ratios: Iterable[float]) -> list[SweepRow]:
    """One row per ``H/h`` (with ``h = 1``): ratio, ``mu*hH``, feasibility."""
    rows = []
    for r in ratios:
        r = float(r)
        if not (math.isfinite(r) and r > 0):
            raise InvalidInputError(f"ratios must be positive, got {r!r}")
        rep = monotonicity_margin(CellGeometry(r, 1.0))
        rows.append(SweepRow(r, rep.normalized_margin, rep.feasible))
    return rows
