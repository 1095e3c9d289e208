"""Random instance generators shared by the tests."""
import numpy as np

from adaptw.measures import ProcessShape, make_markov_measure, scenario_tree


def random_tree(rng, T, d=1, max_children=3, levels=None):
    """Random scenario tree; ``levels`` snaps points to a k-point lattice
    (creates ties and degenerate transports)."""
    shape = ProcessShape(d, T)

    def point():
        if levels:
            return rng.integers(0, levels, d) / (levels - 1)
        return rng.random(d)

    def rec(depth):
        if depth > T:
            return []
        k = int(rng.integers(1, max_children + 1))
        pts = {tuple(point()) for _ in range(k)}
        probs = rng.dirichlet(np.ones(len(pts)))
        return [(np.array(p), float(w), rec(depth + 1)) for p, w in zip(sorted(pts), probs)]

    return scenario_tree(shape, rec(1))


def random_markov(rng, T, max_states=3, d=1):
    shape = ProcessShape(d, T)
    supports = []
    for _ in range(T):
        n = int(rng.integers(1, max_states + 1))
        supports.append(np.unique(rng.random((n, d)), axis=0))
    initial = rng.dirichlet(np.ones(len(supports[0])))
    transitions = []
    for t in range(T - 1):
        P = rng.dirichlet(np.ones(len(supports[t + 1])), size=len(supports[t]))
        P[P < 0.05] = 0.0  # some sparsity
        P /= P.sum(axis=1, keepdims=True)
        transitions.append(P)
    return make_markov_measure(shape, supports, initial, transitions)
