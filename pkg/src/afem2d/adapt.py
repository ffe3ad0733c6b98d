"""Solve-estimate-mark-refine loops and goal-oriented weighting."""

import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import bank_weiser as bw
from . import estimators
from . import quadrature as quad
from .fem import (
    FEFunction,
    FunctionSpace,
    assemble_poisson,
    cell_geometry,
    h1_seminorm_error,
    physical_points,
    solve,
)
from .mesh import IndicatorField, mark_dorfler, mark_maximum, refine, uniform_refine

_BW_SELECTOR = re.compile(r"bw:(\d+),(\d+)")


def resolve_estimator(selector):
    """Map a selector string to a callable (u, f, g) -> IndicatorField.

    Grammar: ``bw:K+,K-`` | ``bw:bubble`` | ``res`` | ``zz``.
    """
    s = selector.strip()
    if s == "res":
        return lambda u, f, g: estimators.residual_estimate(u, f, g)
    if s == "zz":
        return lambda u, f, g: estimators.zz_estimate(u)
    if s == "bw:bubble":
        return lambda u, f, g: bw.estimate_bubble(u, f, g)[0]
    match = _BW_SELECTOR.fullmatch(s)
    if match:
        pair = bw.validate_pair((int(match.group(1)), int(match.group(2))))
        return lambda u, f, g: bw.estimate(u, f, g, pair=pair)[0]
    raise ValueError(f"unknown estimator selector: {selector!r}")


@dataclass
class AdaptConfig:
    """Settings for one adaptive run.

    At least one stopping rule (max_dofs, tol, max_iterations) must be
    set; they are checked in that order after each solve.
    """

    estimator: str = "bw:2,1"
    degree: int = 1
    marking: str = "dorfler"
    theta: float = 0.5
    max_dofs: int | None = None
    tol: float | None = None
    max_iterations: int | None = None
    solver: str = "cg"

    def __post_init__(self):
        if self.marking not in ("dorfler", "maximum"):
            raise ValueError(f"unknown marking strategy: {self.marking!r}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"marking fraction must be in (0, 1], got {self.theta!r}")
        if self.max_dofs is None and self.tol is None and self.max_iterations is None:
            raise ValueError("need at least one stopping rule")
        resolve_estimator(self.estimator)


@dataclass
class TraceRow:
    iteration: int
    num_dofs: int
    eta: float
    err: float
    efficiency: float
    num_marked: int


@dataclass
class AdaptTrace:
    """Per-iteration record of an adaptive run; serializes to CSV."""

    rows: list = field(default_factory=list)

    HEADER = "iter,ndof,eta,err,efficiency,nmarked"

    def append(self, row):
        if self.rows and row.num_dofs <= self.rows[-1].num_dofs:
            raise ValueError("DOF counts must increase strictly across iterations")
        self.rows.append(row)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self):
        lines = [self.HEADER]
        for r in self.rows:
            lines.append(
                f"{r.iteration},{r.num_dofs},{r.eta:.12e},{r.err:.12e},"
                f"{r.efficiency:.12e},{r.num_marked}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        with open(path, "w") as handle:
            handle.write(self.to_csv())


def loglog_slope(x, y, points=4):
    """Least-squares slope of log y against log x over the trailing points."""
    x = np.asarray(x, dtype=float)[-points:]
    y = np.asarray(y, dtype=float)[-points:]
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass
class AdaptResult:
    trace: AdaptTrace
    mesh: object
    solution: FEFunction
    indicator: IndicatorField


def _marker(config):
    return mark_dorfler if config.marking == "dorfler" else mark_maximum


def _stop(config, num_dofs, eta, iteration):
    if config.max_dofs is not None and num_dofs >= config.max_dofs:
        return True
    if config.tol is not None and eta <= config.tol:
        return True
    if config.max_iterations is not None and iteration >= config.max_iterations:
        return True
    return False


def adapt_loop(problem, config):
    """Drive solve/estimate/mark/refine on a benchmark problem."""
    estimator = resolve_estimator(config.estimator)
    mark = _marker(config)
    mesh = problem.mesh
    trace = AdaptTrace()
    iteration = 0
    while True:
        space = FunctionSpace(mesh, config.degree)
        system = assemble_poisson(space, problem.f, problem.g, problem.u_dirichlet)
        u = FEFunction(space, solve(system, method=config.solver))
        indicator = estimator(u, problem.f, problem.g)
        eta = indicator.global_value
        if problem.grad_exact is not None:
            err = h1_seminorm_error(u, problem.grad_exact)
        else:
            err = float("nan")
        marked = mark(indicator, config.theta)
        efficiency = eta / err if err > 0 else float("nan")
        trace.append(
            TraceRow(iteration, space.num_dofs, eta, err, efficiency, len(marked))
        )
        if _stop(config, space.num_dofs, eta, iteration) or marked.size == 0:
            return AdaptResult(trace, mesh, u, indicator)
        mesh = refine(mesh, marked)
        iteration += 1


def evaluate_goal(u, c, quad_degree=None):
    """Goal functional <c, u_h> by quadrature."""
    space = u.space
    order = 2 * space.degree + 3 if quad_degree is None else quad_degree
    pts, wts = quad.triangle_rule(order)
    jac, det, _ = cell_geometry(space.mesh)
    x = physical_points(space.mesh, pts, jac)
    cv = np.asarray(c(x[..., 0], x[..., 1]), dtype=float)
    uv = np.einsum("ci,qi->cq", u.cell_coeffs(), space.element.tabulate(pts))
    return float(np.einsum("cq,cq,q,c->", cv, uv, wts, det))


def assemble_dual(space, c, quad_degree=None):
    """Dual Poisson system: load ``c``, homogeneous Dirichlet data."""
    return assemble_poisson(space, c, g=None, u_dirichlet=None, quad_degree=quad_degree)


def wgo_indicators(primal, dual):
    """Weighted goal indicators from primal and dual indicator fields.

    Returns (IndicatorField, eta_w) with

        eta_w,T^2 = (eta_z^2 eta_u,T^2 + eta_u^2 eta_z,T^2)
                    / (eta_u^2 + eta_z^2)
        eta_w     = eta_u * eta_z
    """
    pu = primal.values if isinstance(primal, IndicatorField) else np.asarray(primal)
    pz = dual.values if isinstance(dual, IndicatorField) else np.asarray(dual)
    su = float(np.sum(pu**2))
    sz = float(np.sum(pz**2))
    if su + sz == 0.0:
        return IndicatorField(np.zeros_like(pu)), 0.0
    w2 = (sz * pu**2 + su * pz**2) / (su + sz)
    return IndicatorField(np.sqrt(w2)), float(np.sqrt(su * sz))


@dataclass
class GoalResult:
    trace: AdaptTrace
    mesh: object
    primal: FEFunction
    dual: FEFunction
    indicator: IndicatorField
    reference: float


def goal_adapt_loop(problem, config, reference=None):
    """Goal-driven adaptivity; the trace's eta/err columns carry the
    weighted estimator and the reference goal error."""
    if problem.goal is None:
        raise ValueError(f"problem {problem.name!r} has no goal functional")
    if reference is None:
        reference = reference_goal_value(problem, config.degree)
    estimator = resolve_estimator(config.estimator)
    mark = _marker(config)
    c = problem.goal.c
    mesh = problem.mesh
    trace = AdaptTrace()
    iteration = 0
    while True:
        space = FunctionSpace(mesh, config.degree)
        primal_sys = assemble_poisson(space, problem.f, problem.g, problem.u_dirichlet)
        u = FEFunction(space, solve(primal_sys, method=config.solver))
        z = FEFunction(space, solve(assemble_dual(space, c), method=config.solver))
        eta_u = estimator(u, problem.f, problem.g)
        eta_z = estimator(z, c, None)
        indicator, eta_w = wgo_indicators(eta_u, eta_z)
        err = abs(reference - evaluate_goal(u, c))
        marked = mark(indicator, config.theta)
        efficiency = eta_w / err if err > 0 else float("nan")
        trace.append(
            TraceRow(iteration, space.num_dofs, eta_w, err, efficiency, len(marked))
        )
        if _stop(config, space.num_dofs, eta_w, iteration) or marked.size == 0:
            return GoalResult(trace, mesh, u, z, indicator, reference)
        mesh = refine(mesh, marked)
        iteration += 1


def reference_goal_value(
    problem, degree=1, method="fe", refinements=4, cache_path=None
):
    """High-accuracy J(u) for goal-error reporting, cached as a text file.

    ``fe`` solves once on the ``refinements``-times uniformly refined
    initial mesh with degree + 2 elements; ``quadrature`` integrates
    c * u_exact directly and needs the exact solution.
    """
    key = f"{problem.name} {method} degree={degree} refinements={refinements}"
    if cache_path is not None and os.path.exists(cache_path):
        with open(cache_path) as handle:
            stored_key, value = handle.read().splitlines()[:2]
        if stored_key == key:
            return float(value)
    if method == "fe":
        mesh = uniform_refine(problem.mesh, refinements)
        space = FunctionSpace(mesh, min(degree + 2, 4))
        system = assemble_poisson(space, problem.f, problem.g, problem.u_dirichlet)
        u = FEFunction(space, solve(system, method="lu"))
        value = evaluate_goal(u, problem.goal.c)
    elif method == "quadrature":
        from .problems import goal_reference_quadrature

        value = goal_reference_quadrature(problem)
    else:
        raise ValueError(f"unknown goal reference method: {method!r}")
    if cache_path is not None:
        with open(cache_path, "w") as handle:
            handle.write(f"{key}\n{value:.17g}\n")
    return value
