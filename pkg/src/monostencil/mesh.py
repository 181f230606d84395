"""Uniform and layer-adapted meshes on [0, 1] and their tensor products."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .exceptions import InvalidInputError
from .feasibility import is_feasible
from .stencil import AsymmetricCellGeometry

__all__ = [
    "Mesh1D",
    "ShishkinSpec",
    "TensorMesh2D",
    "NodeClassification",
    "CellClassification",
    "uniform_mesh",
    "shishkin_mesh",
    "bakhvalov_mesh",
    "classify_cells",
    "local_geometry",
]


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Strictly increasing nodes with ``nodes[0] == 0`` and ``nodes[-1] == 1``."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidInputError("a mesh needs at least two nodes")
        if not np.all(np.isfinite(nodes)):
            raise InvalidInputError("mesh nodes must be finite")
        if nodes[0] != 0.0 or nodes[-1] != 1.0:
            raise InvalidInputError(f"mesh must span [0, 1], got [{nodes[0]}, {nodes[-1]}]")
        if np.any(np.diff(nodes) <= 0.0):
            raise InvalidInputError("mesh nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.nodes)

    def __eq__(self, other):
        return isinstance(other, Mesh1D) and np.array_equal(self.nodes, other.nodes)

    def __len__(self):
        return self.nodes.size


@dataclass(frozen=True)
class ShishkinSpec:
    N: int
    eps: float
    sigma: float = 2.0
    layer_side: str = "low"

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 4 or self.N % 2:
            raise InvalidInputError(f"Shishkin mesh needs an even N >= 4, got {self.N!r}")
        if not (0.0 < self.eps <= 1.0):
            raise InvalidInputError(f"eps must lie in (0, 1], got {self.eps!r}")
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise InvalidInputError(f"sigma must be positive, got {self.sigma!r}")
        if self.layer_side not in ("low", "high"):
            raise InvalidInputError(f"layer_side must be 'low' or 'high', got {self.layer_side!r}")

    @property
    def tau(self) -> float:
        """Transition point ``min(1/2, sigma * eps * ln N)``."""
        return min(0.5, self.sigma * self.eps * math.log(self.N))


@dataclass(frozen=True)
class TensorMesh2D:
    x_mesh: Mesh1D
    y_mesh: Mesh1D

    def __post_init__(self):
        if len(self.x_mesh) < 3 or len(self.y_mesh) < 3:
            raise InvalidInputError("tensor mesh needs at least 3 nodes per direction")

    @property
    def shape(self):
        return len(self.x_mesh), len(self.y_mesh)

    @property
    def n_interior(self) -> int:
        return (len(self.x_mesh) - 2) * (len(self.y_mesh) - 2)

    def transposed(self) -> TensorMesh2D:
        return TensorMesh2D(self.y_mesh, self.x_mesh)

    def to_json_dict(self) -> dict:
        return {"x": self.x_mesh.nodes.tolist(), "y": self.y_mesh.nodes.tolist()}

    @classmethod
    def from_json_dict(cls, data) -> TensorMesh2D:
        if not isinstance(data, dict) or set(data) != {"x", "y"}:
            raise InvalidInputError('mesh JSON must be an object with exactly the keys "x" and "y"')
        for key in ("x", "y"):
            vals = data[key]
            if not isinstance(vals, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals
            ):
                raise InvalidInputError(f'mesh key "{key}" must be a list of numbers')
        return cls(Mesh1D(data["x"]), Mesh1D(data["y"]))


def uniform_mesh(N: int) -> Mesh1D:
    if int(N) != N or N < 2:
        raise InvalidInputError(f"uniform mesh needs N >= 2, got {N!r}")
    N = int(N)
    return Mesh1D(np.arange(N + 1) / N)


def _mirror(nodes: np.ndarray) -> np.ndarray:
    return (1.0 - nodes)[::-1]


def shishkin_mesh(spec: ShishkinSpec) -> Mesh1D:
    """Piecewise-uniform mesh: N/2 intervals on [0, tau], N/2 on [tau, 1].

    With ``layer_side='high'`` the fine part sits next to x = 1 instead.
    """
    half = spec.N // 2
    tau = spec.tau
    if tau == 0.5:
        return uniform_mesh(spec.N)
    k = np.arange(half + 1)
    fine = tau * k / half
    coarse = tau + (1.0 - tau) * k[1:] / half
    nodes = np.concatenate([fine, coarse])
    nodes[-1] = 1.0
    if spec.layer_side == "high":
        nodes = _mirror(nodes)
    return Mesh1D(nodes)


def bakhvalov_mesh(N: int, eps: float, sigma: float = 2.0, q: float = 0.5,
                   layer_side: str = "low") -> Mesh1D:
    """Bakhvalov-type graded mesh.

    The mesh-generating function is ``phi(t) = -sigma*eps*ln(1 - t/q)`` on
    ``[0, t0]`` and the tangent line through ``(t0, phi(t0))`` and ``(1, 1)``
    afterwards, so ``phi`` is C^1.  The matching point ``t0`` is the root of
    ``phi(t0) + phi'(t0)*(1 - t0) = 1`` in ``[0, q)``, which is unique since
    the left side is increasing.  When ``sigma*eps >= q`` there is no root
    with ``t0 >= 0`` (the layer would cover the whole interval) and the
    uniform mesh is returned.
    """
    if int(N) != N or N < 4:
        raise InvalidInputError(f"Bakhvalov mesh needs N >= 4, got {N!r}")
    if not (0.0 < eps <= 1.0):
        raise InvalidInputError(f"eps must lie in (0, 1], got {eps!r}")
    if not (sigma > 0.0 and math.isfinite(sigma)):
        raise InvalidInputError(f"sigma must be positive, got {sigma!r}")
    if not (0.0 < q < 1.0):
        raise InvalidInputError(f"q must lie in (0, 1), got {q!r}")
    if layer_side not in ("low", "high"):
        raise InvalidInputError(f"layer_side must be 'low' or 'high', got {layer_side!r}")
    N = int(N)
    a = sigma * eps
    if a >= q:
        return uniform_mesh(N)

    def phi(t):
        return -a * np.log1p(-t / q)

    def match(t0):
        return phi(t0) + a / (q - t0) * (1.0 - t0) - 1.0

    # match(0) = a/q - 1 < 0 and match -> +inf as t0 -> q.
    upper = q * (1.0 - 1e-15)
    if match(upper) <= 0.0:
        raise InvalidInputError(
            f"no C1 matching point for eps={eps}, sigma={sigma}, q={q} in double precision"
        )
    t0 = brentq(match, 0.0, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    slope = a / (q - t0)
    t = np.arange(N + 1) / N
    nodes = np.where(t <= t0, phi(np.minimum(t, t0)), phi(t0) + slope * (t - t0))
    nodes[0], nodes[-1] = 0.0, 1.0
    if np.any(np.diff(nodes) <= 0.0):
        raise InvalidInputError(f"Bakhvalov nodes are not strictly increasing for N={N}, eps={eps}")
    if layer_side == "high":
        nodes = _mirror(nodes)
    return Mesh1D(nodes)


@dataclass(frozen=True)
class NodeClassification:
    i: int
    j: int
    geometry: AsymmetricCellGeometry
    ratio: float
    monotone_feasible: bool


@dataclass(frozen=True)
class CellClassification:
    nodes: tuple
    n_interior: int
    n_infeasible: int
    max_ratio: float

    @property
    def fraction_infeasible(self) -> float:
        return self.n_infeasible / self.n_interior

    @property
    def infeasible(self) -> list:
        return [(c.i, c.j) for c in self.nodes if not c.monotone_feasible]

    def mask(self, shape) -> np.ndarray:
        """Boolean array over interior nodes, indexed ``[i-1, j-1]``; True = feasible."""
        out = np.zeros((shape[0] - 2, shape[1] - 2), dtype=bool)
        for c in self.nodes:
            out[c.i - 1, c.j - 1] = c.monotone_feasible
        return out

    def summary(self) -> dict:
        return {
            "n_interior": self.n_interior,
            "n_infeasible": self.n_infeasible,
            "fraction_infeasible": self.fraction_infeasible,
            "max_ratio": self.max_ratio,
        }


def local_geometry(mesh: TensorMesh2D, i: int, j: int) -> AsymmetricCellGeometry:
    x, y = mesh.x_mesh.nodes, mesh.y_mesh.nodes
    return AsymmetricCellGeometry(x[i] - x[i - 1], x[i + 1] - x[i], y[j] - y[j - 1], y[j + 1] - y[j])


def classify_cells(mesh: TensorMesh2D) -> CellClassification:
    """Flag every interior node by whether its symmetrized cell admits a monotone stencil.

    The symmetrized cell uses the larger spacing on each axis; its
    anisotropy ``max(Hbar/hbar, hbar/Hbar)`` is reported as the node ratio.
    """
    nx, ny = mesh.shape
    rows = []
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            geom = local_geometry(mesh, i, j)
            sym = geom.symmetrized()
            rows.append(NodeClassification(i, j, geom, sym.anisotropy, is_feasible(sym)))
    n_bad = sum(not r.monotone_feasible for r in rows)
    return CellClassification(
        nodes=tuple(rows),
        n_interior=len(rows),
        n_infeasible=n_bad,
        max_ratio=max(r.ratio for r in rows),
    )
