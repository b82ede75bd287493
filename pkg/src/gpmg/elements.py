"""Lagrange reference elements (P1, P2) and simplex quadrature.

Everything is expressed in barycentric coordinates (lambda_0..lambda_d);
reference coordinates are x_i = lambda_i for i >= 1. Quadrature rules are
conical-product (Duffy) rules built from Gauss-Jacobi nodes, which are
exact for the advertised total degree with positive weights.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .errors import ConfigurationError

__all__ = [
    "ReferenceElement",
    "QuadratureRule",
    "reference_element",
    "shape_values",
    "shape_gradients",
    "quadrature",
]

MAX_EXACT_DEGREE = 8


@dataclass(frozen=True)
class ReferenceElement:
    dim: int
    degree: int
    n_basis: int
    node_coords: np.ndarray  # barycentric, (n_basis, dim+1)
    edges: tuple  # local vertex pairs carrying P2 edge dofs


def reference_element(dim, degree):
    if dim not in (1, 2, 3) or degree not in (1, 2):
        raise ConfigurationError(f"unsupported element dim={dim} degree={degree}")
    nverts = dim + 1
    vert_bary = np.eye(nverts)
    if degree == 1:
        return ReferenceElement(dim, 1, nverts, vert_bary, ())
    edges = tuple(itertools.combinations(range(nverts), 2))
    mids = np.array([(vert_bary[a] + vert_bary[b]) / 2.0 for a, b in edges])
    nodes = np.vstack([vert_bary, mids])
    return ReferenceElement(dim, 2, nverts * (nverts + 1) // 2, nodes, edges)


def _as_bary(elem, point):
    pt = np.atleast_2d(np.asarray(point, dtype=float))
    if pt.shape[1] != elem.dim + 1:
        raise ConfigurationError(
            f"expected barycentric point of length {elem.dim + 1}"
        )
    return pt


def shape_values(elem, point):
    """Nodal basis values at barycentric point(s); (n_basis,) or (npts, n_basis)."""
    lam = _as_bary(elem, point)
    if elem.degree == 1:
        vals = lam.copy()
    else:
        nverts = elem.dim + 1
        vals = np.empty((lam.shape[0], elem.n_basis))
        vals[:, :nverts] = lam * (2.0 * lam - 1.0)
        for e, (a, b) in enumerate(elem.edges):
            vals[:, nverts + e] = 4.0 * lam[:, a] * lam[:, b]
    return vals[0] if np.asarray(point).ndim == 1 else vals


def shape_gradients(elem, point):
    """Reference-coordinate gradients; (n_basis, dim) or (npts, n_basis, dim)."""
    lam = _as_bary(elem, point)
    d = elem.dim
    npts = lam.shape[0]
    # grad lambda_0 = -1, grad lambda_i = e_i
    glam = np.vstack([-np.ones((1, d)), np.eye(d)])  # (d+1, d)
    if elem.degree == 1:
        grads = np.broadcast_to(glam, (npts, d + 1, d)).copy()
    else:
        nverts = d + 1
        grads = np.empty((npts, elem.n_basis, d))
        grads[:, :nverts, :] = (4.0 * lam - 1.0)[:, :, None] * glam[None, :, :]
        for e, (a, b) in enumerate(elem.edges):
            grads[:, nverts + e, :] = 4.0 * (
                lam[:, a, None] * glam[b] + lam[:, b, None] * glam[a]
            )
    return grads[0] if np.asarray(point).ndim == 1 else grads


@dataclass(frozen=True)
class QuadratureRule:
    dim: int
    exact_degree: int
    points: np.ndarray  # barycentric, (nq, dim+1)
    weights: np.ndarray  # sum to 1/dim!


def _jacobi01(n, alpha):
    """Nodes/weights on [0,1] for the weight (1-t)^alpha."""
    if alpha == 0:
        x, w = np.polynomial.legendre.leggauss(n)
    else:
        x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1)


def quadrature(dim, exact_degree):
    """Conical-product rule exact for total degree <= exact_degree."""
    if dim not in (1, 2, 3):
        raise ConfigurationError(f"unsupported quadrature dim {dim}")
    if not 1 <= exact_degree <= MAX_EXACT_DEGREE:
        raise ConfigurationError(
            f"exact_degree must be in [1, {MAX_EXACT_DEGREE}], got {exact_degree}"
        )
    n = (exact_degree + 2) // 2  # 2n-1 >= exact_degree
    axes = [_jacobi01(n, alpha) for alpha in range(dim - 1, -1, -1)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    coords = [g.ravel() for g in grids]
    weights = np.ones_like(coords[0])
    for wg in wgrids:
        weights = weights * wg.ravel()
    # Collapse the cube onto the simplex: x_k = t_k * prod_{j<k} (1 - t_j).
    ref = np.empty((weights.size, dim))
    scale = np.ones_like(coords[0])
    for k in range(dim):
        ref[:, k] = coords[k] * scale
        scale = scale * (1.0 - coords[k])
    bary = np.column_stack([1.0 - ref.sum(axis=1), ref])
    assert abs(weights.sum() - 1.0 / math.factorial(dim)) < 1e-12
    return QuadratureRule(dim, exact_degree, bary, weights)
