"""Shared measure generators for the tests."""
import functools

import numpy as np
from hypothesis import strategies as st

from kreinfeller.measure import LEFT, RIGHT, cantor_spec, compile_measure, from_atoms, uniform_spec


def rand_pair(rng, n):
    """n V atoms in (0.01, 0.99), one W atom in every gap between them
    (including the two end gaps), random masses."""
    y = np.sort(rng.uniform(0.01, 0.99, n))
    while n > 1 and np.min(np.diff(y)) < 1e-4:
        y = np.sort(rng.uniform(0.01, 0.99, n))
    edges = np.concatenate([[0.0], y, [1.0]])
    w = [rng.uniform(edges[i], edges[i + 1]) for i in range(n + 1)]
    w = [x for x in w if 0.0 < x < 1.0]
    W = from_atoms(w, rng.uniform(0.2, 1.0, len(w)) / len(w), RIGHT)
    V = from_atoms(y, rng.uniform(0.2, 1.0, n) / n, LEFT)
    return W, V


@st.composite
def atomic_pairs(draw, min_n=1, max_n=12):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(min_n, max_n))
    return rand_pair(np.random.default_rng(seed), n)


@st.composite
def free_measures(draw, chirality, max_n=8):
    """Atoms anywhere in (0, 1) with no interleaving constraint."""
    n = draw(st.integers(1, max_n))
    pos = draw(st.lists(st.floats(0.001, 0.999), min_size=n, max_size=n, unique=True)
               .filter(lambda xs: len(xs) < 2 or np.min(np.diff(np.sort(xs))) > 1e-9))
    mass = draw(st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n))
    return from_atoms(pos, mass, chirality)


@functools.lru_cache(maxsize=None)
def classical(n):
    return compile_measure(uniform_spec(RIGHT), n), compile_measure(uniform_spec(LEFT), n)


@functools.lru_cache(maxsize=None)
def cantor_pair(depth=8, v_res=1024):
    return compile_measure(cantor_spec(depth, RIGHT), 1), compile_measure(uniform_spec(LEFT), v_res)


def two_site():
    """v = w = (1/2, 1/2) with interleaved atoms: the spectrum is {0, 16}."""
    W = from_atoms([0.5, 0.999], [0.5, 0.5], RIGHT)
    V = from_atoms([0.25, 0.75], [0.5, 0.5], LEFT)
    return W, V
