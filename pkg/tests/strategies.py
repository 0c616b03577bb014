"""Hypothesis strategies for small finite alphabets."""

import numpy as np
from hypothesis import strategies as st


def pmf_arrays(min_size=2, max_size=6, allow_zero=False):
    floor = 0.0 if allow_zero else 0.02

    @st.composite
    def build(draw):
        k = draw(st.integers(min_size, max_size))
        value = st.one_of(st.just(0.0), st.floats(1e-3, 1.0)) if allow_zero else st.floats(floor, 1.0)
        w = np.array(draw(st.lists(value, min_size=k, max_size=k)))
        if w.sum() <= 0:
            w[0] = 1.0
        return w / w.sum()

    return build()


@st.composite
def pmf_pairs(draw, min_size=2, max_size=6, allow_zero_p=False):
    p = draw(pmf_arrays(min_size, max_size, allow_zero=allow_zero_p))
    k = p.size
    q = np.array(draw(st.lists(st.floats(0.02, 1.0), min_size=k, max_size=k)))
    return p, q / q.sum()


@st.composite
def kernels(draw, n_in=None, n_out=None):
    a = draw(st.integers(2, 4)) if n_in is None else n_in
    b = draw(st.integers(2, 4)) if n_out is None else n_out
    rows = [draw(pmf_arrays(b, b)) for _ in range(a)]
    return np.array(rows)
