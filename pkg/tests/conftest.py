import itertools

import numpy as np
import pytest

from qpolar.algebra import Quasigroup
from qpolar.dmc import Dmc


def random_channel(rng, nx, ny, conc=0.5) -> Dmc:
    return Dmc(rng.dirichlet(np.full(ny, conc), size=nx))


def random_latin_square(rng, n) -> np.ndarray:
    """Uniform-ish Latin square by randomized backtracking (fine for n <= 7)."""
    t = -np.ones((n, n), dtype=np.int64)

    def fill(k):
        if k == n * n:
            return True
        r, c = divmod(k, n)
        used = set(t[r, :c]) | set(t[:r, c])
        for v in rng.permutation(n):
            if v not in used:
                t[r, c] = v
                if fill(k + 1):
                    return True
        t[r, c] = -1
        return False

    fill(0)
    return t


def permutation_group(perms) -> Quasigroup:
    """Cayley table of the group generated by closing ``perms`` under composition."""
    perms = [tuple(p) for p in perms]
    elems = {tuple(range(len(perms[0])))}
    frontier = list(elems)
    while frontier:
        new = []
        for a in frontier:
            for b in perms:
                c = tuple(a[i] for i in b)
                if c not in elems:
                    elems.add(c)
                    new.append(c)
        frontier = new
    elems = sorted(elems)
    idx = {e: i for i, e in enumerate(elems)}
    table = [[idx[tuple(a[i] for i in b)] for b in elems] for a in elems]
    return Quasigroup(np.array(table))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_messages(q, n_len):
    return np.array(list(itertools.product(range(q), repeat=n_len)), dtype=np.int64)
