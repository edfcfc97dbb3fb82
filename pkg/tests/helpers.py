"""Small constructors shared across test files."""

import numpy as np

from demandrec.data import CategoryMap, _build_log
from demandrec.driver import ModelState
from demandrec.utility import FactoredUtilityMatrix, SolverConfig


def make_log(triplets, m=None, n=None):
    trips = sorted(set(map(tuple, triplets)))
    users = np.array([t[0] for t in trips], dtype=np.int64)
    items = np.array([t[1] for t in trips], dtype=np.int64)
    slots = np.array([t[2] for t in trips], dtype=np.int64)
    if m is None:
        m = int(users.max()) + 1
    if n is None:
        n = int(items.max()) + 1
    return _build_log(users, items, slots, m=m, n=n)


def make_cats(assignment, r=None):
    a = np.asarray(assignment, dtype=np.int64)
    return CategoryMap(assignment=a, r=r if r is not None else int(a.max()) + 1)


def random_triplets(rng, m, n, l, count):
    """Exactly ``count`` distinct triplets, every user and item present."""
    assert count >= max(m, n)
    seen = set()
    for u in range(m):
        seen.add((u, int(rng.integers(n)), int(rng.integers(l))))
    for j in range(n):
        seen.add((int(rng.integers(m)), j, int(rng.integers(l))))
    while len(seen) < count:
        seen.add((int(rng.integers(m)), int(rng.integers(n)), int(rng.integers(l))))
    return sorted(seen)


def model_from_dense(X_dense, d, l, cfg=None):
    """ModelState wrapping an arbitrary dense utility matrix."""
    X_dense = np.asarray(X_dense, dtype=float)
    U, s, Vt = np.linalg.svd(X_dense, full_matrices=False)
    keep = s > 1e-12
    if keep.any():
        X = FactoredUtilityMatrix(
            np.ascontiguousarray(U[:, keep]), s[keep],
            np.ascontiguousarray(Vt[keep].T),
        )
    else:
        X = FactoredUtilityMatrix.zeros(*X_dense.shape)
    return ModelState(
        X=X,
        d=np.asarray(d, dtype=float),
        config=cfg or SolverConfig(),
        objective_history=[],
        iterations=0,
        duration_flags=(),
        l=l,
    )


def triplet_list(log):
    return list(zip(log.users.tolist(), log.items.tolist(), log.slots.tolist()))
