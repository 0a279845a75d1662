import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satinspect import guidance_env as ge

W = ge.HlRewardWeights()


def run_greedy(graph, start):
    ep = ge.hl_reset(graph, start_indices=start)
    steps, penalties = 0, 0
    while not ep.done:
        act = ge.greedy_planner(ep.observe(), ep.graph)
        penalties += sum(a != h and ep.graph.visited[a] for a, h in zip(act, ep.agent_indices))
        ge.hl_step(ep, act)
        steps += 1
        assert steps <= len(graph)
    return ep, steps, penalties


class TestGraph:
    @pytest.mark.parametrize("layout,count", [("auto", 20), ("fibonacci", 20), ("fibonacci", 7),
                                              ("fibonacci", 1)])
    def test_on_ellipsoid(self, layout, count):
        g = ge.build_graph(count, layout=layout, seed=3)
        assert len(g) == count
        p = g.points
        lhs = (p[:, 0] / 351) ** 2 + (p[:, 1] / 750) ** 2 + (p[:, 2] / 300) ** 2
        assert np.allclose(lhs, 1.0, rtol=0, atol=1e-9)
        assert not g.visited.any()

    def test_default_has_twenty_distinct_points(self):
        g = ge.build_graph()
        assert len(g) == 20
        d = np.linalg.norm(g.points[:, None] - g.points[None], axis=2)
        assert d[~np.eye(20, dtype=bool)].min() > 1.0

    def test_cube_vertices_match_start_positions(self):
        g = ge.build_graph()
        for start in ([-202.7, 433.0, 173.2], [202.7, -433.0, 173.2], [202.7, 433.0, -173.2]):
            assert np.linalg.norm(g.points[g.nearest(start)] - start) < 0.1

    def test_seed_determinism(self):
        a, b = ge.build_graph(seed=5), ge.build_graph(seed=5)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, ge.build_graph(seed=6).points)

    def test_invalid(self):
        with pytest.raises(ValueError):
            ge.build_graph(0)
        with pytest.raises(ValueError):
            ge.build_graph(12, layout="dodecahedron")
        with pytest.raises(ValueError):
            ge.build_graph(layout="cube")

    def test_csv_round_trip(self, tmp_path):
        g = ge.build_graph(seed=1)
        g.to_csv(tmp_path / "g.csv")
        back = ge.InspectionGraph.from_csv(tmp_path / "g.csv")
        assert np.array_equal(back.points, g.points)


class TestReward:
    def test_stay_on_fresh_points_is_zero(self):
        pts = ge.build_graph().points
        assert ge.hl_reward([0, 1, 2], np.zeros(20, bool), [0, 1, 2], W, pts) == 0.0

    def test_two_agent_conflict(self):
        pts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
        w = ge.HlRewardWeights(alpha=0.0, beta=0.0, nu=0.7)
        r = ge.hl_reward([2, 2], np.zeros(3, bool), [2, 2], w, pts)
        assert abs(r - (-2 * 0.7)) <= 1e-12

    def test_move_to_visited_point(self):
        pts = np.array([[0.0, 0, 0], [30.0, 40.0, 0]])
        visited = np.array([True, True])
        r = ge.hl_reward([1], visited, [0], W, pts)
        assert abs(r - (-(W.alpha * 50.0 + W.beta))) <= 1e-12

    @settings(max_examples=200)
    @given(st.lists(st.integers(0, 19), min_size=3, max_size=3),
           st.lists(st.integers(0, 19), min_size=3, max_size=3),
           st.lists(st.booleans(), min_size=20, max_size=20))
    def test_never_positive(self, act, prev, mask):
        assert ge.hl_reward(act, mask, prev, W, ge.build_graph().points) <= 0.0

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            ge.HlRewardWeights(nu=-1)


class TestStep:
    def test_last_point_finishes(self):
        g = ge.build_graph()
        ep = ge.hl_reset(g, start_indices=[0, 1, 2])
        ep.graph.visited[:19] = True
        _, _, done = ge.hl_step(ep, [19, 1, 2])
        assert done and ep.done

    def test_three_new_points_flip_three_bits(self):
        ep = ge.hl_reset(ge.build_graph(), start_indices=[0, 1, 2])
        before = ep.graph.visited.copy()
        obs, _, _ = ge.hl_step(ep, [5, 6, 7])
        assert (obs.visited != before).sum() == 3
        assert obs.agent_point_indices == (5, 6, 7)

    def test_invalid_index(self):
        ep = ge.hl_reset(ge.build_graph(), start_indices=[0, 1, 2])
        with pytest.raises(ge.GraphIndexError):
            ge.hl_step(ep, [0, 1, 20])
        with pytest.raises(ValueError):
            ge.hl_step(ep, [0, 1])

    def test_reset_marks_starts(self):
        ep = ge.hl_reset(ge.build_graph(), 3, seed=4)
        assert ep.graph.visited.sum() == len(set(ep.agent_indices))

    @settings(max_examples=50)
    @given(st.lists(st.lists(st.integers(0, 19), min_size=3, max_size=3), max_size=15))
    def test_mask_monotone(self, actions):
        ep = ge.hl_reset(ge.build_graph(), start_indices=[0, 1, 2])
        prev = ep.graph.visited.copy()
        for a in actions:
            obs, _, _ = ge.hl_step(ep, a)
            assert np.all(obs.visited >= prev)
            prev = obs.visited


class TestGreedy:
    def test_one_unvisited_point(self):
        g = ge.build_graph()
        visited = np.ones(20, bool)
        visited[11] = False
        act = ge.greedy_planner(ge.HlObservation((0, 1, 2), visited), g)
        assert act == [11, 1, 2]

    def test_tie_goes_to_lower_index(self):
        g = ge.InspectionGraph([[0.0, 0, 0], [0, 0, 5], [0, 0, -5]])
        obs = ge.HlObservation((0,), np.array([True, False, False]))
        assert ge.greedy_planner(obs, g) == [1]

    def test_claimed_and_planning_mask(self):
        g = ge.InspectionGraph([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [9, 0, 0]])
        obs = ge.HlObservation((0, 3), np.array([True, False, False, True]))
        assert ge.greedy_planner(obs, g, claimed=[1], planning=[True, False]) == [2, 3]

    @pytest.mark.parametrize("seed", range(200))
    def test_full_episode(self, seed):
        g = ge.build_graph()
        start = ge.hl_reset(g, 3, seed=seed).agent_indices
        ep, steps, penalties = run_greedy(g, start)
        assert ep.graph.visited.all()
        assert steps <= math.ceil(20 / 3) + 2
        assert penalties == 0

    @settings(max_examples=100)
    @given(st.lists(st.booleans(), min_size=20, max_size=20), st.integers(0, 2**31))
    def test_no_duplicate_assignments(self, mask, seed):
        g = ge.build_graph()
        here = tuple(int(i) for i in np.random.default_rng(seed).integers(0, 20, 3))
        act = ge.greedy_planner(ge.HlObservation(here, np.array(mask)), g)
        moved = [a for a, h in zip(act, here) if a != h]
        assert len(moved) == len(set(moved))
        assert not any(mask[a] for a in moved)


class TestRouting:
    def test_collinear_single_agent(self):
        pts = np.array([[0.0, 0, 0], [30, 0, 0], [10, 0, 0], [20, 0, 0]])
        sol = ge.brute_force_router(pts, 1, [0])
        assert sol.sequences == ((0, 2, 3, 1),)
        assert sol.cost == pytest.approx(30.0, abs=1e-12)

    def test_two_clusters(self):
        rng = np.random.default_rng(0)
        a = np.array([0.0, 0, 0]) + rng.normal(size=(3, 3))
        b = np.array([500.0, 0, 0]) + rng.normal(size=(3, 3))
        pts = np.vstack([a, b])
        sol = ge.brute_force_router(pts, 2, [0, 3])
        assert set(sol.sequences[0]) == {0, 1, 2}
        assert set(sol.sequences[1]) == {3, 4, 5}

    def test_too_large(self):
        with pytest.raises(ge.InstanceTooLargeError):
            ge.brute_force_router(np.zeros((9, 3)) + np.arange(9)[:, None], 1, [0])
        with pytest.raises(ge.InstanceTooLargeError):
            ge.brute_force_router(np.eye(3) * np.arange(1, 4), 4, [0, 1, 2, 0])

    def test_matches_exhaustive_orderings_one_agent(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(6, 3)) * 100
        best = min(ge.tour_cost([(0,) + p], pts) for p in itertools.permutations(range(1, 6)))
        assert ge.brute_force_router(pts, 1, [0]).cost == pytest.approx(best, rel=1e-12)

    def test_greedy_never_beats_optimum(self):
        ratios = []
        for seed in range(200):
            rng = np.random.default_rng(seed)
            k = int(rng.integers(1, 4))
            m = int(rng.integers(k, 8))
            pts, start = ge.random_instance(m, k, seed)
            sol = ge.brute_force_router(pts, k, start)
            covered = set(itertools.chain.from_iterable(sol.sequences))
            assert covered == set(range(m))
            _, greedy = ge.greedy_rollout(pts, start)
            assert greedy >= sol.cost - 1e-9
            if sol.cost > 0:
                ratios.append(greedy / sol.cost)
        assert np.mean(ratios) >= 1.0


class TestTourCost:
    def test_empty(self):
        assert ge.tour_cost([], np.zeros((1, 3))) == 0.0
        assert ge.tour_cost([[0]], np.zeros((1, 3))) == 0.0

    def test_single_leg(self):
        assert ge.tour_cost([[0, 1]], [[0.0, 0, 0], [0, 100, 0]]) == 100.0

    def test_additive(self):
        pts = np.random.default_rng(2).normal(size=(6, 3))
        j1, j2 = [0, 3, 1], [2, 5, 4]
        assert ge.tour_cost([j1, j2], pts) == pytest.approx(
            ge.tour_cost([j1], pts) + ge.tour_cost([j2], pts), rel=1e-15)
