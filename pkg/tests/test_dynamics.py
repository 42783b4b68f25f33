import math

import numpy as np
import pytest
from conftest import random_system, uniform_system

from src.dynamics import (
    CollisionApproach,
    Configuration,
    EdgeCollision,
    NotConverged,
    RMASystem,
    Stalled,
    apply_rigid_motion,
    compose_rigid_motions,
    edge_distances,
    flow,
    gauge_motion,
    newton_refine,
    null_vectors,
    field_hessian,
    potential,
    random_configuration,
    residual,
    restrict_configuration,
    vector_field,
)
from src.interaction_laws import CallableLaw, Ensemble, StandardLaw
from src.tlg_graph import build_tlg, random_tlg

SQ2 = math.sqrt(2.0)


def fd_jacobian(system, y, h=1e-6):
    J = np.zeros((y.size, y.size))
    for k in range(y.size):
        e = np.zeros(y.size)
        e[k] = h
        J[:, k] = (vector_field(system, y + e) - vector_field(system, y - e)) / (2 * h)
    return J


def test_configuration_layout():
    cfg = Configuration.from_points([[0.0, 1.0], [2.0, 3.0]])
    np.testing.assert_array_equal(cfg.coords, [0.0, 2.0, 1.0, 3.0])
    assert cfg.n == 2
    assert cfg.distance(1, 2) == pytest.approx(math.hypot(2.0, 2.0))
    assert not cfg.coords.flags.writeable
    with pytest.raises(ValueError):
        Configuration([1.0, 2.0, 3.0])


def test_system_requires_matching_edges(triangle):
    with pytest.raises(ValueError):
        RMASystem(triangle.graph, Ensemble({(1, 2): StandardLaw()}))


def test_two_agent_field_and_potential(pair):
    cfg = Configuration.from_points([[0.0, 0.0], [2.0, 0.0]])
    # f(2) = 1 − 1/4
    np.testing.assert_allclose(vector_field(pair, cfg), [1.5, -1.5, 0.0, 0.0])
    assert potential(pair, cfg) == pytest.approx(1.5 - math.log(2.0))
    assert residual(pair, cfg) == pytest.approx(1.5)
    assert edge_distances(pair, cfg) == {(1, 2): pytest.approx(2.0)}


def test_coincident_agents(pair):
    cfg = Configuration.from_points([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(EdgeCollision):
        vector_field(pair, cfg)
    with pytest.raises(ValueError):
        potential(pair, cfg)


def test_hessian_matches_finite_differences():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        system = random_system(random_tlg(int(rng.integers(2, 6)), rng), rng)
        cfg = random_configuration(system.n, rng, scale=3.0, min_distance=0.3)
        H = field_hessian(system, cfg)
        J = fd_jacobian(system, cfg.coords)
        assert np.linalg.norm(H - J) <= 1e-6 * np.linalg.norm(H)


def test_hessian_structure_on_a_axis():
    system = random_system(build_tlg((1, 2), [(3, (1, 2)), (4, (2, 3))]), np.random.default_rng(1))
    cfg = Configuration.on_line([0.0, 1.1, 2.5, 3.2])
    H = field_hessian(system, cfg)
    n = system.n
    assert not np.any(H[:n, n:])
    assert not np.any(H[n:, :n])
    for (i, j), law in system.ensemble.laws.items():
        d = cfg.distance(i, j)
        assert H[i - 1, j - 1] == pytest.approx(law.ftilde_prime(d))
        assert H[n + i - 1, n + j - 1] == pytest.approx(law.f(d))
    np.testing.assert_allclose(H.sum(axis=1), 0.0, atol=1e-12)


def test_collinear_triangle_blocks(triangle):
    cfg = Configuration.on_line([0.0, SQ2, SQ2 / 2])
    assert residual(triangle, cfg) <= 1e-12
    H = field_hessian(triangle, cfg)
    lam_f = np.linalg.eigvalsh(H[3:, 3:])
    # F_p: one positive, two zero
    assert np.sum(lam_f > 1e-8) == 1
    assert np.sum(np.abs(lam_f) <= 1e-8) == 2
    lam = np.linalg.eigvalsh(H)
    assert (np.sum(lam > 1e-8), np.sum(np.abs(lam) <= 1e-8), np.sum(lam < -1e-8)) == (1, 3, 2)


def test_null_vectors_at_equilibrium(triangle):
    cfg = Configuration.from_points([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    H = field_hessian(triangle, cfg)
    for v in null_vectors(cfg):
        assert np.linalg.norm(H @ v) <= 1e-10 * np.linalg.norm(H)


def test_translations_are_null_everywhere(rng, triangle):
    cfg = random_configuration(3, rng)
    H = field_hessian(triangle, cfg)
    t_a, t_b, _ = null_vectors(cfg)
    np.testing.assert_allclose(H @ t_a, 0.0, atol=1e-12)
    np.testing.assert_allclose(H @ t_b, 0.0, atol=1e-12)


def test_rigid_motions_preserve_field_norm(rng, triangle):
    cfg = random_configuration(3, rng)
    moved = apply_rigid_motion(cfg, 0.7, (1.0, -2.0))
    assert np.linalg.norm(vector_field(triangle, moved)) == pytest.approx(np.linalg.norm(vector_field(triangle, cfg)))
    assert potential(triangle, moved) == pytest.approx(potential(triangle, cfg))


def test_compose_rigid_motions(rng):
    cfg = random_configuration(4, rng)
    g1, g2 = (0.4, (1.0, 0.5)), (-1.3, (0.2, 2.0))
    twice = apply_rigid_motion(apply_rigid_motion(cfg, *g1), *g2)
    once = apply_rigid_motion(cfg, *compose_rigid_motions(g1, g2))
    assert twice.allclose(once, 1e-12)


def test_gauge_motion(rng):
    cfg = random_configuration(3, rng)
    gauged = apply_rigid_motion(cfg, *gauge_motion(cfg, 2, 3))
    np.testing.assert_allclose(gauged.point(2), [0.0, 0.0], atol=1e-12)
    assert gauged.point(3)[0] > 0
    assert gauged.point(3)[1] == pytest.approx(0.0, abs=1e-12)


def test_random_configuration_is_reproducible():
    a = random_configuration(5, np.random.default_rng(3), min_distance=0.2)
    b = random_configuration(5, np.random.default_rng(3), min_distance=0.2)
    assert a.allclose(b, 0.0)
    pts = a.points()
    gaps = [np.linalg.norm(pts[i] - pts[j]) for i in range(5) for j in range(i + 1, 5)]
    assert min(gaps) >= 0.2


def test_restrict_configuration():
    cfg = Configuration.from_points([[0, 0], [1, 0], [2, 0], [3, 1]])
    sub = restrict_configuration(cfg, {2: 1, 4: 2})
    np.testing.assert_array_equal(sub.points(), [[1, 0], [3, 1]])


def test_flow_two_agents_to_rest_length(pair):
    res = flow(pair, Configuration.from_points([[0.0, 0.0], [2.0, 0.0]]))
    assert res.status == "converged"
    assert res.residual <= 1e-10
    assert res.config.distance(1, 2) == pytest.approx(1.0, abs=1e-10)
    assert res.potential_monotone
    assert res.potential_end <= res.potential_start
    assert np.all(np.diff(res.potentials) <= 1e-12 * (1 + np.abs(res.potentials[:-1])))


def test_flow_polishes_below_handoff(pair):
    res = flow(pair, Configuration.from_points([[0.0, 0.0], [2.0, 0.0]]))
    assert res.polished
    assert res.time < 100.0
    assert res.potential_end == pytest.approx(potential(pair, res.config))


def test_flow_starting_inside_handoff(pair):
    res = flow(pair, Configuration.from_points([[0.0, 0.0], [1.0 + 1e-8, 0.0]]))
    assert res.status == "converged"
    assert res.polished
    assert res.residual <= 1e-10
    assert res.time == 0.0


@pytest.mark.parametrize("n", [4, 5])
def test_random_flows_converge(n):
    rng = np.random.default_rng(70 + n)
    for _ in range(10):
        system = random_system(random_tlg(n, rng), rng)
        res = flow(system, random_configuration(n, rng, scale=3.0))
        assert res.status == "converged"
        assert res.residual <= 1e-10
        assert res.potential_monotone
        assert res.potential_end <= res.potential_start


def test_flow_already_converged(pair):
    start = Configuration.from_points([[0.0, 0.0], [1.0, 0.0]])
    res = flow(pair, start)
    assert res.steps == 0
    assert res.config is start


def test_flow_stalls_on_short_horizon(pair):
    with pytest.raises(Stalled) as err:
        flow(pair, Configuration.from_points([[0.0, 0.0], [3.0, 0.0]]), t_max=1e-3)
    assert err.value.result.residual > 1e-10


def test_flow_reports_collision_for_pure_attraction():
    system = uniform_system(build_tlg((1, 2), []), CallableLaw(lambda d: d, lambda d: 1.0, name="spring"))
    with pytest.raises(CollisionApproach) as err:
        flow(system, Configuration.from_points([[0.0, 0.0], [2.0, 0.0]]))
    assert err.value.result.min_edge_distance <= 1e-8 * 1.01


def test_newton_refine_triangle(rng, triangle):
    eq = Configuration.from_points([[0.0, 0.0], [1.0, 0.0], [0.5, math.sqrt(3) / 2]])
    approx = Configuration(eq.coords + 1e-4 * rng.standard_normal(6))
    out = newton_refine(triangle, approx)
    assert residual(triangle, out) <= 1e-12
    for i, j in triangle.graph.edge_list:
        assert out.distance(i, j) == pytest.approx(1.0, abs=1e-10)
    # the frame of the input is kept
    np.testing.assert_allclose(out.point(1), approx.point(1), atol=1e-3)


def test_newton_refine_from_far_start(rng, triangle):
    out = newton_refine(triangle, random_configuration(3, rng))
    assert residual(triangle, out) <= 1e-12


def test_newton_refine_returns_converged_input(pair):
    start = Configuration.from_points([[0.0, 0.0], [1.0, 0.0]])
    assert newton_refine(pair, start) is start


def test_newton_refine_raises_when_unconverged(pair):
    with pytest.raises(NotConverged) as err:
        newton_refine(pair, Configuration.from_points([[0.0, 0.0], [1.5, 0.0]]), max_iter=0)
    assert err.value.residual > 1e-12
    assert err.value.config.n == 2
