import itertools
import warnings

import numpy as np
import pytest

from spgraph.mrf import (MrfProblem, Stroke, apply_strokes, edit_cycle,
                         rasterize_stroke, solve, unary_from_prob)


def enumerate_optimum(problem):
    """Exhaustive search over all 2^N labelings (oracle for small N)."""
    n = len(problem.unary)
    best = None
    best_e = np.inf
    for bits in itertools.product((0, 1), repeat=n):
        labels = np.array(bits, dtype=np.int64)
        ok = all(labels[i] == s for i, s in problem.seeds.items())
        if not ok:
            continue
        e = problem.energy(labels)
        if e < best_e - 1e-12:
            best_e = e
            best = labels
    return best, best_e


def random_problem(rng, n_max=12):
    n = int(rng.integers(2, n_max + 1))
    prob = rng.random(n)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < 0.35:
                edges.append((i, j))
    edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
    weights = rng.random(len(edges)) * 2.0
    seeds = {}
    for i in range(n):
        r = rng.random()
        if r < 0.1:
            seeds[i] = 0
        elif r < 0.2:
            seeds[i] = 1
    return MrfProblem(unary=unary_from_prob(prob), edges=edges,
                      weights=weights, seeds=seeds)


class TestEnergy:
    def test_hand_example_two_nodes(self):
        # p = (0.9, 0.6), one edge with weight 0.5; all four energies by hand:
        #   E(0,0)=0.9+0.6        E(0,1)=0.9+0.4+0.5
        #   E(1,0)=0.1+0.6+0.5    E(1,1)=0.1+0.4
        problem = MrfProblem(unary=unary_from_prob(np.array([0.9, 0.6])),
                             edges=np.array([[0, 1]]),
                             weights=np.array([0.5]))
        assert problem.energy(np.array([0, 0])) == pytest.approx(1.5)
        assert problem.energy(np.array([0, 1])) == pytest.approx(1.8)
        assert problem.energy(np.array([1, 0])) == pytest.approx(1.2)
        assert problem.energy(np.array([1, 1])) == pytest.approx(0.5)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            MrfProblem(unary=np.array([[-0.1, 0.5]]),
                       edges=np.empty((0, 2), dtype=np.int64),
                       weights=np.empty(0))


class TestSolve:
    def test_two_node_example(self):
        # Strong smoothness pulls the weaker node to agree with the stronger.
        problem = MrfProblem(unary=unary_from_prob(np.array([0.9, 0.4])),
                             edges=np.array([[0, 1]]),
                             weights=np.array([0.8]))
        labels, energy = solve(problem)
        enum_labels, enum_e = enumerate_optimum(problem)
        assert labels.tolist() == enum_labels.tolist() == [1, 1]
        assert energy == pytest.approx(enum_e)
        assert energy == pytest.approx(0.1 + 0.6, abs=1e-12)

    def test_phi_zero_is_argmax(self):
        rng = np.random.default_rng(0)
        prob = rng.random(30)
        prob[prob == 0.5] = 0.6
        problem = MrfProblem(unary=unary_from_prob(prob),
                             edges=np.array([[i, i + 1] for i in range(29)]),
                             weights=np.zeros(29))
        labels, _ = solve(problem)
        assert labels.tolist() == (prob > 0.5).astype(int).tolist()

    def test_random_vs_enumeration(self):
        rng = np.random.default_rng(1)
        for trial in range(200):
            problem = random_problem(rng)
            labels, energy = solve(problem)
            _, enum_e = enumerate_optimum(problem)
            assert energy == pytest.approx(enum_e, abs=1e-9), trial
            assert problem.energy(labels) == pytest.approx(energy, abs=1e-12)

    def test_seeds_inviolable(self):
        # Seeding against overwhelming unary and smoothness evidence.
        n = 6
        problem = MrfProblem(
            unary=unary_from_prob(np.full(n, 0.99)),
            edges=np.array([[i, i + 1] for i in range(n - 1)]),
            weights=np.full(n - 1, 50.0),
            seeds={0: 0, 3: 0})
        labels, _ = solve(problem)
        assert labels[0] == 0 and labels[3] == 0

    def test_smooth_cost_monotone_in_phi(self):
        rng = np.random.default_rng(2)
        prob = rng.random(10)
        edges = np.array([[i, (i + 3) % 10] for i in range(10)])
        alpha = rng.random(10)
        cuts = []
        for phi in [0.0, 0.5, 2.0, 10.0]:
            problem = MrfProblem(unary=unary_from_prob(prob), edges=edges,
                                 weights=phi * alpha)
            labels, _ = solve(problem)
            diff = labels[edges[:, 0]] != labels[edges[:, 1]]
            cuts.append(float(alpha[diff].sum()))
        assert all(a >= b - 1e-9 for a, b in zip(cuts, cuts[1:]))

    def test_global_effect(self):
        # A five-node chain where seeding one end flips the whole chain: the
        # solver is global, not local to the stroked node.
        prob = np.full(5, 0.45)
        edges = np.array([[i, i + 1] for i in range(4)])
        weights = np.full(4, 1.0)
        base = MrfProblem(unary=unary_from_prob(prob), edges=edges,
                          weights=weights)
        labels0, _ = solve(base)
        assert labels0.tolist() == [0] * 5
        seeded = MrfProblem(unary=unary_from_prob(prob), edges=edges,
                            weights=weights, seeds={0: 1})
        labels1, _ = solve(seeded)
        assert labels1.tolist() == [1] * 5


class TestStrokes:
    def test_validation(self):
        with pytest.raises(ValueError):
            Stroke(points=[], action="add")
        with pytest.raises(ValueError):
            Stroke(points=[(1, 1)], action="paint")
        with pytest.raises(ValueError):
            Stroke(points=[(1, 1)], action="add", radius=0)

    def test_rasterize_point_disk_oracle(self):
        s = Stroke(points=[(10, 12)], action="add", radius=3)
        hit = rasterize_stroke(s, 24, 24)
        for y in range(24):
            for x in range(24):
                inside = (x - 10) ** 2 + (y - 12) ** 2 <= 9
                assert hit[y, x] == inside

    def test_rasterize_segment_oracle(self):
        # every mask pixel is within radius of the segment, and every line
        # sample point is covered
        s = Stroke(points=[(2, 2), (14, 9)], action="add", radius=2)
        hit = rasterize_stroke(s, 20, 20)
        ys, xs = np.nonzero(hit)
        p0, p1 = np.array([2.0, 2.0]), np.array([14.0, 9.0])
        d = p1 - p0
        for x, y in zip(xs, ys):
            t = np.clip(np.dot([x, y] - p0, d) / np.dot(d, d), 0, 1)
            # +~1.42 slack: the walk rounds to integer pixels first
            assert np.linalg.norm([x, y] - (p0 + t * d)) <= s.radius + 1.5
        assert hit[2, 2] and hit[9, 14]

    def test_clipped_stroke(self):
        s = Stroke(points=[(-2, -2)], action="add", radius=3)
        hit = rasterize_stroke(s, 16, 16)
        assert hit.any() and hit[0, 0]

    def test_outside_stroke_warns(self):
        m = np.zeros((8, 8), dtype=np.int64)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            prob, seeds = apply_strokes(np.array([0.5]), m,
                                        [Stroke(points=[(100, 100)], action="add")])
        assert len(caught) == 1
        assert seeds == {} and prob.tolist() == [0.5]

    def test_later_stroke_wins(self):
        m = np.zeros((8, 8), dtype=np.int64)
        strokes = [Stroke(points=[(4, 4)], action="add"),
                   Stroke(points=[(4, 4)], action="delete")]
        prob, seeds = apply_strokes(np.array([0.9]), m, strokes)
        assert seeds == {0: 0} and prob.tolist() == [0.0]


class TestEditCycle:
    def make_inputs(self):
        m = np.zeros((16, 16), dtype=np.int64)
        m[:, 8:] = 1
        m[8:, :8] = 2
        m[8:, 8:] = 3
        node_prob = np.array([0.2, 0.45, 0.3, 0.1])
        edges = np.array([[0, 1], [0, 2], [1, 3], [2, 3]])
        alpha = np.array([0.9, 0.1, 0.1, 0.2])
        return node_prob, edges, alpha, m

    def test_add_stroke_flips_connected(self):
        node_prob, edges, alpha, m = self.make_inputs()
        strokes = [Stroke(points=[(12, 2)], action="add", radius=2)]
        labels, changed, mask, energy = edit_cycle(
            node_prob, edges, alpha, m, strokes, phi=1.0)
        assert labels[1] == 1
        assert labels[0] == 1  # strong alpha edge drags the neighbor along
        assert set(np.unique(mask)) <= {0, 1}
        assert (mask == labels[m]).all()
        assert 1 in changed

    def test_idempotent_replay(self):
        node_prob, edges, alpha, m = self.make_inputs()
        strokes = [Stroke(points=[(12, 2)], action="add", radius=2),
                   Stroke(points=[(2, 12)], action="delete", radius=2)]
        a = edit_cycle(node_prob, edges, alpha, m, strokes)
        b = edit_cycle(node_prob, edges, alpha, m, strokes)
        assert a[0].tolist() == b[0].tolist()
        assert a[3] == b[3]

    def test_no_strokes_matches_plain_solve(self):
        node_prob, edges, alpha, m = self.make_inputs()
        labels, changed, mask, energy = edit_cycle(
            node_prob, edges, alpha, m, [], phi=10.0)
        ref, ref_e = solve(MrfProblem(unary=unary_from_prob(node_prob),
                                      edges=edges, weights=10.0 * alpha))
        assert labels.tolist() == ref.tolist()
        assert energy == pytest.approx(ref_e)
