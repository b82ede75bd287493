"""Product-space Newton step, multigrid drivers, and the mixing scheme.

One Newton step linearizes the constrained eigenproblem around (lam0, u0)
and solves the bordered system

    K u1 - lam1 M u0 = 2 (f'(u0^2) u0^3, phi) - lam0 M u0
    -(u0, u1)        = -1/2 - (u0, u0)/2

with K = stiffness + potential mass + M_{f(u0^2)} + 2 M_{f'(u0^2) u0^2}
- lam0 M on interior dofs. The multigrid drivers solve the coarsest space
nonlinearly once and take one (possibly damped) Newton step per level.
"""

import time

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import (
    FemSpace,
    FieldCoeffs,
    Operators,
    assemble_field_weighted_mass,
    assemble_nonlinear_load,
    prolongation_matrix,
)
from .eigsolve import ScfConfig, scf_solve
from .errors import DivergenceError, StagnationError, UsageError
from .linsolve import BorderedSystem, SolverConfig, VCycleHierarchy, solve_bordered
from .nonlinearity import f_eval, fprime_eval
from .state import IterateX, RunTrace, TraceRow

__all__ = [
    "LevelContext",
    "MixingParams",
    "build_contexts",
    "assemble_newton_system",
    "newton_iteration",
    "newton_fixed_space",
    "resi",
    "mixing_iteration",
    "multigrid_newton",
    "multigrid_mixing",
]

# A Newton step that inflates resi beyond this factor (above a noise
# floor) aborts the plain-Newton driver in favor of the mixing scheme.
RESI_GROWTH_FACTOR = 1.25
RESI_FLOOR = 1e-10


class MixingParams:
    def __init__(self, theta_init=1.0, theta_min=2.0**-20):
        if not 0.0 < theta_init <= 1.0:
            raise UsageError("theta_init must be in (0, 1]")
        self.theta_init = theta_init
        self.theta_min = theta_min


class LevelContext:
    """One mesh level of a problem: space, cached operators, Riesz solver."""

    def __init__(self, space, nl, potential=None, a_coeff=None):
        self.space = space
        self.nl = nl
        self.potential = potential
        self.a_coeff = a_coeff
        self.ops = Operators(space, nl, potential=potential, a_coeff=a_coeff)
        self._riesz_lu = None

    def riesz_norm(self, functional):
        """H1 norm of the Riesz representative of an interior functional."""
        ix = self.space.interior_dofs
        if self._riesz_lu is None:
            h1 = self.ops.h1_mat[ix][:, ix].tocsc()
            self._riesz_lu = spla.splu(h1)
        r = functional[ix]
        z = self._riesz_lu.solve(r)
        return float(np.sqrt(max(z @ r, 0.0)))


def build_contexts(hierarchy, degree, nl, potential=None, a_coeff=None):
    return [
        LevelContext(FemSpace(mesh, degree), nl, potential, a_coeff)
        for mesh in hierarchy.levels
    ]


def resi(ctx, x):
    """Computable residual: H1 Riesz norm of the eigen-residual functional
    plus half the normalization defect."""
    r = ctx.ops.residual(x.lam, x.u)
    v = x.u.values if isinstance(x.u, FieldCoeffs) else x.u
    defect = abs(1.0 - float(v @ (ctx.ops.mass @ v)))
    return ctx.riesz_norm(r) + 0.5 * defect


def _newton_matrix(ctx, lam0, u0_full):
    k = ctx.ops.linear_part - lam0 * ctx.ops.mass
    if ctx.nl.zeta != 0:
        k = k + assemble_field_weighted_mass(
            ctx.space, u0_full, lambda t: f_eval(ctx.nl, t**2)
        )
        k = k + 2.0 * assemble_field_weighted_mass(
            ctx.space, u0_full, lambda t: fprime_eval(ctx.nl, t**2) * t**2
        )
    return k.tocsr()


def assemble_newton_system(ctx, x0):
    """Bordered system of the Newton step at x0 (already on ctx's space)."""
    space = ctx.space
    u0 = x0.u.values if isinstance(x0.u, FieldCoeffs) else np.asarray(x0.u)
    if u0.shape != (space.n_dofs,):
        raise UsageError("x0 must live on the target space; prolongate first")
    ix = space.interior_dofs
    k = _newton_matrix(ctx, x0.lam, u0)[ix][:, ix].tocsr()
    mu0 = ctx.ops.mass @ u0
    m = mu0[ix].copy()
    r = -x0.lam * mu0[ix]
    if ctx.nl.zeta != 0:
        r = r + assemble_nonlinear_load(space, u0, "fprime_u3", ctx.nl)[ix] * 2.0
    c = -0.5 - 0.5 * float(u0 @ mu0)
    return BorderedSystem(k=k, m=m, r=r, c=c)


def _interior_prolongation(coarse_space, fine_space):
    p = prolongation_matrix(coarse_space, fine_space)
    return p[fine_space.interior_dofs][:, coarse_space.interior_dofs].tocsr()


def _build_vcycle(contexts, target_level_idx, lam0, u0_full, cfg):
    """Per-level Newton matrices for mg_cg, re-assembled (not Galerkin) at
    the linearization point interpolated down the hierarchy."""
    mats = []
    prolongs = []
    fine_ctx = contexts[target_level_idx]
    u_by_level = {target_level_idx: u0_full}
    for idx in range(target_level_idx - 1, -1, -1):
        from .assembly import interpolate_field

        u_by_level[idx] = interpolate_field(
            fine_ctx.space if idx + 1 == target_level_idx else contexts[idx + 1].space,
            contexts[idx].space,
            u_by_level[idx + 1],
        )
    for idx in range(target_level_idx + 1):
        ctx = contexts[idx]
        ix = ctx.space.interior_dofs
        mats.append(_newton_matrix(ctx, lam0, u_by_level[idx])[ix][:, ix].tocsr())
        if idx > 0:
            prolongs.append(
                _interior_prolongation(contexts[idx - 1].space, ctx.space)
            )
    return VCycleHierarchy(
        mats, prolongs, pre_smooth=cfg.pre_smooth, post_smooth=cfg.post_smooth
    )


def _prolong_iterate(x0, coarse_space, fine_space):
    p = prolongation_matrix(coarse_space, fine_space)
    u = x0.u.values if isinstance(x0.u, FieldCoeffs) else np.asarray(x0.u)
    return IterateX(
        lam=x0.lam,
        u=FieldCoeffs(fine_space, p @ u),
        level=fine_space.mesh.level,
    )


def _solve_newton(ctx, x0_on_space, cfg, contexts=None, level_idx=None):
    system = assemble_newton_system(ctx, x0_on_space)
    vcycle = None
    n = system.k.shape[0]
    if cfg.resolved_method(n, contexts is not None) == "mg_cg":
        if contexts is None or level_idx is None:
            raise UsageError("mg_cg needs the level contexts")
        u0 = x0_on_space.u.values
        vcycle = _build_vcycle(contexts, level_idx, x0_on_space.lam, u0, cfg)
    sol = solve_bordered(system, cfg, vcycle=vcycle)
    u1 = np.zeros(ctx.space.n_dofs)
    u1[ctx.space.interior_dofs] = sol.u
    return IterateX(
        lam=sol.lam, u=FieldCoeffs(ctx.space, u1), level=ctx.space.mesh.level
    )


def newton_iteration(x0, coarse_space, fine_ctx, cfg=None, contexts=None,
                     level_idx=None):
    """One Newton step from a coarse iterate into the next finer space."""
    cfg = cfg or SolverConfig()
    x0p = x0 if coarse_space is None else _prolong_iterate(
        x0, coarse_space, fine_ctx.space
    )
    return _solve_newton(fine_ctx, x0p, cfg, contexts, level_idx)


def newton_fixed_space(x0, ctx, tol=1e-10, max_steps=12, cfg=None):
    """Repeat the Newton step within one space until resi <= tol.

    Returns the final iterate and the resi history (including the start),
    for empirical quadratic-convergence analysis.
    """
    cfg = cfg or SolverConfig()
    x = x0
    history = [resi(ctx, x)]
    growths = 0
    for _ in range(max_steps):
        if history[-1] <= tol:
            break
        x_new = _solve_newton(ctx, x, cfg)
        history.append(resi(ctx, x_new))
        if history[-1] > history[-2]:
            growths += 1
            if growths >= 2:
                raise DivergenceError(
                    "Newton residual grew on two consecutive steps "
                    f"(history {['%.3e' % h for h in history]})"
                )
        else:
            growths = 0
        x = x_new
    return x, history


def mixing_iteration(x0, coarse_space, fine_ctx, params=None, cfg=None,
                     contexts=None, level_idx=None):
    """Damped Newton step: solve once, then halve theta until the residual
    on the fine space decreases. Never re-solves during the line search."""
    params = params or MixingParams()
    cfg = cfg or SolverConfig()
    x0p = x0 if coarse_space is None else _prolong_iterate(
        x0, coarse_space, fine_ctx.space
    )
    resi_old = resi(fine_ctx, x0p)
    xhat = _solve_newton(fine_ctx, x0p, cfg, contexts, level_idx)
    theta = params.theta_init
    while theta >= params.theta_min:
        lam = (1.0 - theta) * x0p.lam + theta * xhat.lam
        u = (1.0 - theta) * x0p.u.values + theta * xhat.u.values
        x_new = IterateX(
            lam=lam, u=FieldCoeffs(fine_ctx.space, u),
            level=fine_ctx.space.mesh.level,
        )
        resi_new = resi(fine_ctx, x_new)
        if resi_new <= resi_old:
            return x_new, theta
        theta *= 0.5
    raise StagnationError(
        f"mixing stagnated: resi would rise from {resi_old:.6e} to "
        f"{resi_new:.6e} even at theta < {params.theta_min:.2e}",
        resi_old=resi_old,
        resi_new=resi_new,
    )


def _finalize(contexts, x, renormalize):
    if not renormalize:
        return x
    ctx = contexts[-1]
    v = x.u.values.copy()
    v /= ctx.ops.l2_norm(v)
    u = FieldCoeffs(ctx.space, v)
    return IterateX(lam=ctx.ops.rayleigh_lambda(v), u=u, level=x.level)


def _traced_resi(contexts, x, level_idx):
    """Trace currency: resi of the iterate measured on the finest space of
    the run, so rows of one trace are compared in the same discrete norm.
    (The mixing acceptance test still compares on the step's own space.)"""
    v = x.u.values
    for idx in range(level_idx, len(contexts) - 1):
        v = prolongation_matrix(
            contexts[idx].space, contexts[idx + 1].space
        ) @ v
    fin = contexts[-1]
    return resi(fin, IterateX(lam=x.lam, u=FieldCoeffs(fin.space, v),
                              level=fin.space.mesh.level))


def multigrid_newton(contexts, scf_cfg=None, solver_cfg=None, renormalize=False,
                     reference_lambda=None):
    """Coarse nonlinear solve, then one Newton step per level."""
    return _run_driver(contexts, mixing=False, scf_cfg=scf_cfg,
                       solver_cfg=solver_cfg, params=None,
                       renormalize=renormalize,
                       reference_lambda=reference_lambda)


def multigrid_mixing(contexts, params=None, scf_cfg=None, solver_cfg=None,
                     renormalize=False, reference_lambda=None):
    """Coarse nonlinear solve, then one adaptively damped step per level."""
    return _run_driver(contexts, mixing=True, scf_cfg=scf_cfg,
                       solver_cfg=solver_cfg, params=params or MixingParams(),
                       renormalize=renormalize,
                       reference_lambda=reference_lambda)


def _run_driver(contexts, mixing, scf_cfg, solver_cfg, params, renormalize,
                reference_lambda):
    scf_cfg = scf_cfg or ScfConfig()
    solver_cfg = solver_cfg or SolverConfig()
    trace = RunTrace()
    t0 = time.perf_counter()
    ctx0 = contexts[0]
    x = scf_solve(ctx0.space, ctx0.nl, potential=ctx0.potential,
                  cfg=scf_cfg, ops=ctx0.ops)
    trace.add(TraceRow(
        level=1,
        n_dofs=ctx0.space.n_dofs,
        lam=x.lam,
        resi=_traced_resi(contexts, x, 0),
        wall_time_ms=(time.perf_counter() - t0) * 1e3,
        err_lambda=(abs(x.lam - reference_lambda)
                    if reference_lambda is not None else None),
        scf_iterations=getattr(x, "scf_iterations", None),
    ))

    for idx in range(1, len(contexts)):
        ctx = contexts[idx]
        coarse_space = contexts[idx - 1].space
        t0 = time.perf_counter()
        theta = None
        if mixing:
            try:
                x, theta = mixing_iteration(
                    x, coarse_space, ctx, params=params, cfg=solver_cfg,
                    contexts=contexts, level_idx=idx,
                )
            except StagnationError as err:
                raise StagnationError(
                    f"level {idx + 1}: {err}", err.resi_old, err.resi_new
                ) from err
        else:
            x0p = _prolong_iterate(x, coarse_space, ctx.space)
            resi_old = resi(ctx, x0p)
            x = _solve_newton(ctx, x0p, solver_cfg, contexts, idx)
            resi_new = resi(ctx, x)
            if resi_new > max(RESI_GROWTH_FACTOR * resi_old, RESI_FLOOR):
                raise DivergenceError(
                    f"level {idx + 1}: Newton step grew the residual "
                    f"({resi_old:.6e} -> {resi_new:.6e}); rerun with the "
                    "mixing driver (--mixing)"
                )
        trace.add(TraceRow(
            level=idx + 1,
            n_dofs=ctx.space.n_dofs,
            lam=x.lam,
            resi=_traced_resi(contexts, x, idx),
            theta=theta,
            wall_time_ms=(time.perf_counter() - t0) * 1e3,
            err_lambda=(abs(x.lam - reference_lambda)
                        if reference_lambda is not None else None),
        ))
    return _finalize(contexts, x, renormalize), trace
