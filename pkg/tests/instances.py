"""Seeded random optimisation instances shared by optimizer and acceptance tests."""

import numpy as np

from pedems.optimizer import SegmentInstance


def random_instances(rng: np.random.Generator, max_segments=8, max_routes=4, ties=True):
    n = int(rng.integers(1, max_segments + 1))
    ids = [f"s{k}" for k in range(n)]
    d = rng.uniform(0, 100, n)
    if ties and n > 1 and rng.random() < 0.3:
        d[rng.integers(0, n)] = d[0]  # force a density tie
    if rng.random() < 0.2:
        d = np.round(d / 25) * 25  # coarse levels create more ties
    e = rng.uniform(0.001, 0.05, n)
    f = rng.uniform(0.05, 1.0, n)

    n_routes = int(rng.integers(1, max_routes + 1))
    routes = {}
    for r in range(n_routes):
        size = int(rng.integers(1, n + 1))
        segs = sorted(rng.choice(n, size, replace=False).tolist())
        routes[f"route{r + 1}"] = [ids[k] for k in segs]
    covered = {s for segs in routes.values() for s in segs}
    for s in ids:
        if s not in covered:
            name = f"route{int(rng.integers(1, n_routes + 1))}"
            routes[name] = sorted(routes[name] + [s], key=ids.index)
    # probability of a segment = share of routes through it (route weights random)
    w = rng.uniform(0.1, 1.0, n_routes)
    w = w / w.sum()
    p = np.zeros(n)
    for k, segs in enumerate(routes.values()):
        for s in segs:
            p[ids.index(s)] += w[k]
    p = np.minimum(p, 1.0)
    insts = [SegmentInstance(ids[k], float(p[k]), float(d[k]), float(e[k]), float(f[k])) for k in range(n)]
    total = float(np.sum(p * e))
    budget = float(rng.uniform(0, 1.2) * total)
    return insts, routes, budget
