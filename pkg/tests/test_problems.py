"""Tests for the benchmark problem definitions and their exact solutions."""

import dataclasses

import numpy as np
import pytest

from afem2d.fem import FunctionSpace, interpolate
from afem2d.mesh import DIRICHLET, NEUMANN
from afem2d.adapt import evaluate_goal
from afem2d.problems import (
    PROBLEMS,
    GoalSpec,
    audit,
    boundary_singularity,
    goal_reference_quadrature,
    lshaped,
    lshaped_goal,
    lshaped_mesh,
    lshaped_mixed,
    make_problem,
    unit_square_mesh,
)

RNG = np.random.default_rng(20240821)

FROZEN_GOAL_REFERENCE = 2.01022918211522e-01


# ---------------------------------------------------------------------------
# catalogue and wiring audit
# ---------------------------------------------------------------------------


def test_catalogue_names():
    assert sorted(PROBLEMS) == [
        "boundary-sing", "lshaped", "lshaped-goal", "lshaped-mixed",
    ]


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_audit_passes_for_every_problem(name):
    problem = make_problem(name)
    assert audit(problem) is problem


def test_make_problem_unknown_name():
    with pytest.raises(ValueError, match="unknown problem"):
        make_problem("spherical-cow")


def test_make_problem_passes_alpha_to_boundary_singularity():
    problem = make_problem("boundary-sing", alpha=0.8)
    assert problem.params["alpha"] == 0.8
    # other problems ignore the knob
    assert make_problem("lshaped").params["alpha"] == pytest.approx(2.0 / 3.0)


def test_audit_catches_inconsistent_dirichlet_data():
    bad = dataclasses.replace(lshaped(), u_dirichlet=lambda x, y: x + y)
    with pytest.raises(ValueError, match="Dirichlet data"):
        audit(bad)


def test_audit_catches_inconsistent_neumann_data():
    bad = dataclasses.replace(lshaped_mixed(), g=lambda x, y: np.ones_like(x))
    with pytest.raises(ValueError, match="Neumann data"):
        audit(bad)


def test_audit_catches_inconsistent_forcing():
    good = boundary_singularity()
    bad = dataclasses.replace(good, f=lambda x, y: np.ones_like(x))
    with pytest.raises(ValueError, match="does not match"):
        audit(bad)


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------


def test_lshaped_mesh_counts_and_domain():
    mesh = lshaped_mesh(2)
    assert mesh.num_cells == 6 * 4 * 4
    assert abs(mesh.areas.sum() - 3.0) < 1e-12
    # no vertex inside the excluded third quadrant
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    assert not np.any((x < -1e-12) & (y < -1e-12))


def test_unit_square_mesh_counts():
    mesh = unit_square_mesh(4)
    assert mesh.num_vertices == 25
    assert mesh.num_cells == 32
    assert abs(mesh.areas.sum() - 1.0) < 1e-12
    assert np.all(mesh.facet_tags[mesh.boundary_facets()] == DIRICHLET)


# ---------------------------------------------------------------------------
# exact solutions
# ---------------------------------------------------------------------------


def test_lshaped_solution_values():
    problem = lshaped()
    u = problem.u_exact
    assert u(1.0, 0.0) == pytest.approx(np.sqrt(3.0) / 2.0, abs=1e-14)
    # the singular mode vanishes along both reentrant legs
    assert u(0.0, -1.0) == pytest.approx(0.0, abs=1e-14)
    assert u(-1.0, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_lshaped_solution_harmonic_away_from_corner():
    problem = lshaped()
    u = problem.u_exact
    h = 1e-4
    for x, y in [(0.5, 0.5), (-0.5, 0.5), (0.3, -0.6), (0.9, 0.1)]:
        lap = (
            u(x + h, y) + u(x - h, y) + u(x, y + h) + u(x, y - h) - 4.0 * u(x, y)
        ) / h**2
        assert abs(lap) < 1e-5


@pytest.mark.parametrize("factory", [lshaped, lshaped_mixed])
def test_gradient_matches_finite_differences(factory):
    problem = factory()
    u, grad = problem.u_exact, problem.grad_exact
    h = 1e-6
    pts = RNG.uniform(0.2, 0.9, size=(8, 2))  # first quadrant, away from 0
    pts[::2, 1] *= -1.0  # some points below the x-axis (still in domain)
    for x, y in pts:
        gx, gy = grad(x, y)
        fx = (u(x + h, y) - u(x - h, y)) / (2.0 * h)
        fy = (u(x, y + h) - u(x, y - h)) / (2.0 * h)
        assert abs(gx - fx) < 1e-7
        assert abs(gy - fy) < 1e-7


def test_mixed_problem_neumann_side():
    problem = lshaped_mixed()
    assert problem.u_exact(1.0, 0.0) == pytest.approx(0.5, abs=1e-14)
    # homogeneous flux data on the Neumann leg
    assert problem.g(-0.5, 0.0) == 0.0
    gx, gy = problem.grad_exact(-0.5, 0.0)
    assert abs(gy) < 1e-14  # normal derivative vanishes on y = 0, x < 0
    # Neumann tags appear exactly on that leg
    mesh = problem.mesh
    neumann = np.flatnonzero(mesh.facet_tags == NEUMANN)
    assert neumann.size > 0
    mids = mesh.vertices[mesh.facets[neumann]].mean(axis=1)
    assert np.all(np.abs(mids[:, 1]) < 1e-12)
    assert np.all(mids[:, 0] < 0.0)


def test_boundary_singularity_data():
    problem = boundary_singularity(alpha=0.7)
    assert problem.f(1.0, 0.3) == pytest.approx(0.21, abs=1e-14)
    assert problem.u_exact(0.25, 0.9) == pytest.approx(0.25**0.7, abs=1e-14)
    gx, gy = problem.grad_exact(0.5, 0.5)
    assert gx == pytest.approx(0.7 * 0.5 ** (-0.3), abs=1e-12)
    assert gy == 0.0
    with pytest.raises(ValueError, match="alpha"):
        boundary_singularity(alpha=0.5)
    with pytest.raises(ValueError, match="alpha"):
        boundary_singularity(alpha=0.3)


# ---------------------------------------------------------------------------
# the goal density
# ---------------------------------------------------------------------------


def test_goal_density_peak_and_support():
    spec = GoalSpec()
    peak = np.exp(-1.0) / 0.35**2
    assert spec.c(0.2, 0.2) == pytest.approx(peak, rel=1e-14)
    # radially decreasing towards the support boundary
    radii = np.array([0.0, 0.1, 0.2, 0.3, 0.34])
    values = spec.c(0.2 + radii, 0.2)
    assert (np.diff(values) < 0.0).all()
    assert values[-1] > 0.0
    # identically zero outside (and on) the support circle
    assert spec.c(0.2 + 0.35, 0.2) == 0.0
    assert spec.c(0.2, 0.2 - 0.36) == 0.0
    assert spec.c(-1.0, -1.0) == 0.0
    # approaches zero continuously at the boundary: no jump
    assert spec.c(0.2 + 0.35 - 1e-8, 0.2) < 1e-12


def test_goal_density_vectorized_and_nonnegative():
    spec = GoalSpec()
    xs = RNG.uniform(-1.0, 1.0, size=200)
    ys = RNG.uniform(-1.0, 1.0, size=200)
    values = spec.c(xs, ys)
    assert values.shape == (200,)
    assert (values >= 0.0).all()
    inside = ((xs - 0.2) ** 2 + (ys - 0.2) ** 2) < 0.35**2
    assert ((values > 0.0) == inside).all()


def test_goal_problem_carries_lshaped_data():
    problem = lshaped_goal()
    base = lshaped()
    assert problem.goal is not None
    assert problem.u_exact(0.5, 0.5) == base.u_exact(0.5, 0.5)
    assert problem.mesh.num_cells == base.mesh.num_cells


# ---------------------------------------------------------------------------
# the quadrature reference value
# ---------------------------------------------------------------------------


def test_goal_reference_requires_exact_solution():
    problem = dataclasses.replace(lshaped_goal(), u_exact=None)
    with pytest.raises(ValueError, match="exact solution"):
        goal_reference_quadrature(problem)
    with pytest.raises(ValueError, match="goal"):
        goal_reference_quadrature(lshaped())


def test_goal_reference_frozen_value():
    value = goal_reference_quadrature(lshaped_goal())
    assert value == pytest.approx(FROZEN_GOAL_REFERENCE, abs=1e-8)


def test_goal_reference_against_mesh_quadrature():
    """With u_exact replaced by 1 the reference reduces to the mass of c
    inside the domain, which mesh quadrature reproduces independently."""
    one = lambda x, y: np.ones_like(np.asarray(x, dtype=float))
    fake = dataclasses.replace(lshaped_goal(), u_exact=one)
    mass = goal_reference_quadrature(fake)
    assert 0.0 < mass
    # upper bound: full (unclipped) mollifier mass 2 pi eps^2 ... reduces to
    # a 1-D radial integral evaluated to high accuracy
    from scipy import integrate

    radial, _ = integrate.quad(
        lambda r: 2.0 * np.pi * r * np.exp(-1.0 / (1.0 - r**2)), 0.0, 1.0
    )
    assert mass < radial

    mesh = lshaped_mesh(5)
    u1 = interpolate(one, FunctionSpace(mesh, 1))
    approx = evaluate_goal(u1, lshaped_goal().goal.c, quad_degree=8)
    assert abs(mass - approx) < 1e-3
