"""Finite element spaces and assembly of all discrete operators.

Covers stiffness/mass/weighted-mass matrices, nonlinear load vectors, the
eigenvalue residual functional, the energy, and coarse-to-fine transfer.
Dirichlet conditions are handled by reduction to the interior dof set.
"""

import numpy as np
import scipy.sparse as sp

from . import expr as expr_mod
from .elements import quadrature, reference_element, shape_gradients, shape_values
from .errors import ConfigurationError, UsageError
from .nonlinearity import F_eval, f_eval, fprime_eval

__all__ = [
    "FemSpace",
    "FieldCoeffs",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_weighted_mass",
    "assemble_field_weighted_mass",
    "assemble_nonlinear_load",
    "residual_F",
    "energy",
    "h1_norm",
    "l2_norm",
    "evaluate_field",
    "interpolate_field",
    "prolongation_matrix",
    "prolongate",
    "Operators",
]


class FemSpace:
    """Lagrange space (degree 1 or 2) on one mesh level."""

    def __init__(self, mesh, degree):
        if degree not in (1, 2):
            raise ConfigurationError(f"degree must be 1 or 2, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.elem = reference_element(mesh.dim, degree)

        if degree == 1:
            self.cell_dofs = mesh.cells
            self.dof_coords = mesh.vertices
            boundary = mesh.boundary_vertex_flags.copy()
        else:
            pairs = mesh.cells[:, self.elem.edges]  # (nc, nloc_edges, 2)
            pairs = np.sort(pairs, axis=2).reshape(-1, 2)
            edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
            nloc = len(self.elem.edges)
            edge_ids = inverse.reshape(mesh.n_cells, nloc) + mesh.n_vertices
            self.cell_dofs = np.hstack([mesh.cells, edge_ids])
            mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
            self.dof_coords = np.vstack([mesh.vertices, mids])
            boundary = np.zeros(self.dof_coords.shape[0], dtype=bool)
            for i in range(mesh.dim):
                boundary |= (self.dof_coords[:, i] == mesh.domain.lower[i]) | (
                    self.dof_coords[:, i] == mesh.domain.upper[i]
                )
        self.n_dofs = self.dof_coords.shape[0]
        self.boundary_mask = boundary
        self.boundary_dofs = np.where(boundary)[0]
        self.interior_dofs = np.where(~boundary)[0]
        self._geom = None
        self._quad_cache = {}
        self._prolongation_from = {}

    @property
    def dim(self):
        return self.mesh.dim

    # Default quadrature degrees: 2p for bilinear terms, 2p+2 for terms
    # carrying a nonconstant coefficient (exact for the cubic GPE weight
    # with P1; a declared variational crime beyond that).
    @property
    def bilinear_degree(self):
        return 2 * self.degree

    @property
    def weighted_degree(self):
        return 2 * self.degree + 2

    def rule(self, exact_degree):
        key = int(exact_degree)
        if key not in self._quad_cache:
            rule = quadrature(self.dim, key)
            phi = shape_values(self.elem, rule.points)
            grad = shape_gradients(self.elem, rule.points)
            self._quad_cache[key] = (rule, phi, grad)
        return self._quad_cache[key]

    def geometry(self):
        if self._geom is None:
            verts = self.mesh.vertices[self.mesh.cells]
            jac = verts[:, 1:, :] - verts[:, :1, :]  # rows: edge vectors
            det = np.abs(np.linalg.det(jac))
            inv = np.linalg.inv(jac)
            self._geom = (verts, jac, det, inv)
        return self._geom

    def quad_points_physical(self, rule):
        """Physical coordinates of quadrature points, (n_cells, nq, dim)."""
        verts, _, _, _ = self.geometry()
        return np.einsum("qk,ckd->cqd", rule.points, verts)


class FieldCoeffs:
    """Coefficient vector bound to its space (boundary entries zero)."""

    def __init__(self, space, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (space.n_dofs,):
            raise UsageError(
                f"expected {space.n_dofs} coefficients, got {values.shape}"
            )
        self.space = space
        self.values = values

    @staticmethod
    def zeros(space):
        return FieldCoeffs(space, np.zeros(space.n_dofs))


def _coeffs(u):
    return u.values if isinstance(u, FieldCoeffs) else np.asarray(u, dtype=float)


def _scatter(space, elem_mats):
    nb = space.elem.n_basis
    rows = np.repeat(space.cell_dofs, nb, axis=1).ravel()
    cols = np.tile(space.cell_dofs, (1, nb)).ravel()
    mat = sp.coo_matrix(
        (elem_mats.ravel(), (rows, cols)), shape=(space.n_dofs, space.n_dofs)
    ).tocsr()
    return (mat + mat.T) * 0.5


def assemble_stiffness(space, a_coeff=None):
    """Stiffness matrix for the constant-SPD diffusion tensor (default I)."""
    d = space.dim
    if a_coeff is None:
        a_coeff = np.eye(d)
    a_coeff = np.asarray(a_coeff, dtype=float)
    if a_coeff.shape != (d, d) or not np.allclose(a_coeff, a_coeff.T):
        raise ConfigurationError("A_coeff must be a symmetric dim x dim matrix")
    if np.any(np.linalg.eigvalsh(a_coeff) <= 0):
        raise ConfigurationError("A_coeff must be positive definite")
    rule, _, grad = space.rule(space.bilinear_degree)
    _, _, det, inv = space.geometry()
    t = np.einsum("q,qia,qjb->ijab", rule.weights, grad, grad)
    # physical gradient is inv @ grad_ref, so the cell metric is inv' A inv
    b = np.einsum("c,cka,kl,clb->cab", det, inv, a_coeff, inv)
    b = (b + b.transpose(0, 2, 1)) * 0.5
    return _scatter(space, np.einsum("ijab,cab->cij", t, b))


def assemble_mass(space):
    rule, phi, _ = space.rule(space.bilinear_degree)
    _, _, det, _ = space.geometry()
    p = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    return _scatter(space, det[:, None, None] * p[None, :, :])


def _weighted_mass_from_values(space, wvals, rule, phi):
    _, _, det, _ = space.geometry()
    elem = np.einsum("cq,q,qi,qj->cij", wvals * det[:, None], rule.weights, phi, phi)
    return _scatter(space, elem)


def _spatial_weight_values(space, weight, rule):
    pts = space.quad_points_physical(rule)
    flat = pts.reshape(-1, space.dim)
    if isinstance(weight, expr_mod.Expr):
        vals = expr_mod.evaluate(weight, flat)
    else:
        vals = np.asarray(weight(flat), dtype=float)
    return vals.reshape(pts.shape[0], pts.shape[1])


def assemble_weighted_mass(space, weight, exact_degree=None):
    """Mass matrix weighted by a spatial function (Expr or callable)."""
    degree = space.weighted_degree if exact_degree is None else exact_degree
    rule, phi, _ = space.rule(degree)
    wvals = _spatial_weight_values(space, weight, rule)
    return _weighted_mass_from_values(space, wvals, rule, phi)


def field_values_at_quad(space, u, rule_key):
    rule, phi, _ = space.rule(rule_key)
    u_loc = _coeffs(u)[space.cell_dofs]
    return np.einsum("ci,qi->cq", u_loc, phi), rule, phi


def assemble_field_weighted_mass(space, u, transform, exact_degree=None):
    """Mass matrix weighted by transform(u(x)) with u a FEM field."""
    degree = space.weighted_degree if exact_degree is None else exact_degree
    uq, rule, phi = field_values_at_quad(space, u, degree)
    return _weighted_mass_from_values(space, transform(uq), rule, phi)


def assemble_nonlinear_load(space, u0, which, nl, exact_degree=None):
    """Load vector (f(u0^2) u0, phi_i) or (f'(u0^2) u0^3, phi_i)."""
    if which not in ("f_u", "fprime_u3"):
        raise UsageError(f"unknown load kind {which!r}")
    degree = space.weighted_degree if exact_degree is None else exact_degree
    uq, rule, phi = field_values_at_quad(space, u0, degree)
    if which == "f_u":
        g = f_eval(nl, uq**2) * uq
    else:
        g = fprime_eval(nl, uq**2) * uq**3
    _, _, det, _ = space.geometry()
    elem = np.einsum("cq,q,qi->ci", g * det[:, None], rule.weights, phi)
    vec = np.zeros(space.n_dofs)
    np.add.at(vec, space.cell_dofs.ravel(), elem.ravel())
    return vec


def eliminate_dirichlet(space, mat):
    """Reduce a full-dof matrix to the interior block (idempotent on it)."""
    if mat.shape[0] == space.interior_dofs.size:
        return mat
    ix = space.interior_dofs
    return mat[ix][:, ix].tocsr()


def l2_norm(space, u, mass=None):
    m = assemble_mass(space) if mass is None else mass
    v = _coeffs(u)
    return float(np.sqrt(max(v @ (m @ v), 0.0)))


def h1_norm(space, u, h1_mat=None):
    """sqrt(u' (K_I + M) u) with identity-coefficient stiffness."""
    if h1_mat is None:
        h1_mat = assemble_stiffness(space) + assemble_mass(space)
    v = _coeffs(u)
    return float(np.sqrt(max(v @ (h1_mat @ v), 0.0)))


def energy(space, u, nl, potential=None, a_coeff=None):
    """E(u) = 1/2 a(u,u) + 1/2 integral F(u^2)."""
    v = _coeffs(u)
    k = assemble_stiffness(space, a_coeff)
    quad = 0.5 * (v @ (k @ v))
    if potential is not None:
        mv = assemble_weighted_mass(space, potential)
        quad += 0.5 * (v @ (mv @ v))
    uq, rule, _ = field_values_at_quad(space, u, space.weighted_degree)
    _, _, det, _ = space.geometry()
    quad += 0.5 * float(
        np.einsum("cq,q,c->", F_eval(nl, uq**2), rule.weights, det)
    )
    return quad


def residual_F(space, lam, u, nl, potential=None, a_coeff=None, mats=None):
    """Vector of <F(lam,u), phi_i> with boundary rows zeroed.

    `mats` may carry precomputed (stiffness_plus_potential, mass) to avoid
    reassembly inside iteration loops.
    """
    v = _coeffs(u)
    if mats is None:
        k = assemble_stiffness(space, a_coeff)
        if potential is not None:
            k = k + assemble_weighted_mass(space, potential)
        m = assemble_mass(space)
    else:
        k, m = mats
    r = k @ v - lam * (m @ v)
    if nl.zeta != 0:
        r = r + assemble_nonlinear_load(space, u, "f_u", nl)
    r[space.boundary_dofs] = 0.0
    return r


def evaluate_field(space, u, points):
    """Point evaluation of a FEM field at arbitrary points in the box."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cid, bary = space.mesh.locate(pts)
    phi = shape_values(space.elem, bary)  # (npts, nb)
    dofs = space.cell_dofs[cid]  # (npts, nb)
    vals = np.einsum("pi,pi->p", phi, _coeffs(u)[dofs])
    return vals if np.asarray(points).ndim > 1 else float(vals[0])


def interpolate_field(from_space, to_space, coeffs):
    """Nodal interpolation onto another space (exact when spaces are nested)."""
    return evaluate_field(from_space, coeffs, to_space.dof_coords)


def _check_nested(coarse, fine):
    if coarse.degree != fine.degree:
        raise UsageError("prolongation requires equal polynomial degrees")
    if fine.mesh.level != coarse.mesh.level + 1 or any(
        nf != 2 * nc
        for nf, nc in zip(fine.mesh.cells_per_axis, coarse.mesh.cells_per_axis)
    ):
        raise UsageError("fine space is not the refinement of the coarse space")


def prolongation_matrix(coarse, fine):
    """Sparse nodal-interpolation operator V_coarse -> V_fine (exact embedding)."""
    _check_nested(coarse, fine)
    key = id(coarse)
    if key in fine._prolongation_from:
        return fine._prolongation_from[key]
    cid, bary = coarse.mesh.locate(fine.dof_coords)
    phi = shape_values(coarse.elem, bary)
    nb = coarse.elem.n_basis
    rows = np.repeat(np.arange(fine.n_dofs), nb)
    cols = coarse.cell_dofs[cid].ravel()
    p = sp.coo_matrix(
        (phi.ravel(), (rows, cols)), shape=(fine.n_dofs, coarse.n_dofs)
    ).tocsr()
    p.eliminate_zeros()
    fine._prolongation_from[key] = p
    return p


def prolongate(coarse, fine, coeffs):
    """Transfer coefficients to the refined space, representing the same function."""
    return prolongation_matrix(coarse, fine) @ _coeffs(coeffs)


class Operators:
    """Per-space cache of the u-independent operators of one problem."""

    def __init__(self, space, nl, potential=None, a_coeff=None):
        self.space = space
        self.nl = nl
        self.potential = potential
        self.a_coeff = a_coeff
        self.stiffness = assemble_stiffness(space, a_coeff)
        self.mass = assemble_mass(space)
        if potential is not None:
            self.mass_potential = assemble_weighted_mass(space, potential)
            self.linear_part = (self.stiffness + self.mass_potential).tocsr()
        else:
            self.mass_potential = None
            self.linear_part = self.stiffness
        if a_coeff is None:
            self.h1_mat = (self.stiffness + self.mass).tocsr()
        else:
            self.h1_mat = (assemble_stiffness(space) + self.mass).tocsr()

    def residual(self, lam, u):
        return residual_F(
            self.space, lam, u, self.nl, mats=(self.linear_part, self.mass)
        )

    def l2_norm(self, u):
        return l2_norm(self.space, u, mass=self.mass)

    def h1_norm(self, u):
        return h1_norm(self.space, u, h1_mat=self.h1_mat)

    def rayleigh_lambda(self, u):
        """lambda = a(u,u) + (f(u^2)u, u) for mass-normalized u."""
        v = _coeffs(u)
        val = v @ (self.linear_part @ v)
        if self.nl.zeta != 0:
            val += v @ assemble_nonlinear_load(self.space, u, "f_u", self.nl)
        return float(val)

    def energy(self, u):
        v = _coeffs(u)
        quad = 0.5 * (v @ (self.linear_part @ v))
        uq, rule, _ = field_values_at_quad(
            self.space, u, self.space.weighted_degree
        )
        _, _, det, _ = self.space.geometry()
        quad += 0.5 * float(
            np.einsum("cq,q,c->", F_eval(self.nl, uq**2), rule.weights, det)
        )
        return quad
