import numpy as np
import pytest
from hypothesis import strategies as st

from sregular.quotient import QuotientSpec

HOUSE = [[0, 1, 1, 0, 0], [1, 0, 1, 1, 0], [1, 1, 0, 0, 1], [0, 1, 0, 0, 1], [0, 0, 1, 1, 0]]
HOUSE_COARSE = [[0, 2, 0], [1, 1, 1], [0, 1, 1]]
TWO_BY_TWO = [[14, 2], [2, 2]]
BIREGULAR = [[0, 2], [3, 0]]


def spec(S, **kw) -> QuotientSpec:
    return QuotientSpec(np.array(S), **kw)


@pytest.fixture
def two_cell_spec():
    return spec(TWO_BY_TWO)


@st.composite
def balanced_specs(draw, max_k=3, max_deg=3):
    """Irreducible S with a balance solution: pick sizes and symmetric
    inter-cell edge multiplicities, then read off s_ij."""
    k = draw(st.integers(1, max_k))
    sizes = [draw(st.integers(1, 3)) for _ in range(k)]
    S = np.zeros((k, k), dtype=int)
    for i in range(k):
        S[i, i] = draw(st.integers(0 if k > 1 else 1, max_deg))
        for j in range(i + 1, k):
            lo = 1 if j == i + 1 else 0
            t = draw(st.integers(lo, 2))
            g = np.gcd(sizes[i], sizes[j])
            S[i, j] = t * sizes[j] // g
            S[j, i] = t * sizes[i] // g
    return QuotientSpec(S)
