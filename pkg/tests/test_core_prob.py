import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pmllab.core_prob import (
    ATOM_BUDGET_ENV,
    AbsoluteContinuityError,
    Alphabet,
    CapacityError,
    FiniteMeasure,
    JointPmf,
    Kernel,
    NormalizationError,
    Pmf,
    ProbError,
    atom_budget,
    check_budget,
    divergences,
    entropy,
    kernel_power,
    load_kernel,
    load_pmf,
    power,
    power_distortion,
    power_map,
    rn_ratio,
    tensor_power,
    total_variation,
)
from strategies import kernels, pmf_arrays, pmf_pairs


def test_pmf_rejects_bad_mass():
    with pytest.raises(NormalizationError):
        Pmf(np.array([0.5, 0.6]))
    with pytest.raises(ProbError):
        Pmf(np.array([1.5, -0.5]))
    with pytest.raises(ProbError):
        FiniteMeasure(np.zeros(3))


def test_pmf_renormalizes_tiny_drift():
    p = Pmf(np.array([0.5, 0.5 + 5e-13]))
    assert math.isclose(p.weights.sum(), 1.0, abs_tol=1e-15)


def test_kernel_row_check():
    with pytest.raises(NormalizationError):
        Kernel(np.array([[0.5, 0.5], [0.3, 0.6]]))
    k = Kernel(np.array([[1.0, 0.0], [0.25, 0.75]]))
    assert k.output(Pmf.uniform(2)).weights.tolist() == [0.625, 0.375]


@given(st.lists(st.integers(1, 5), min_size=1, max_size=4), st.data())
def test_alphabet_roundtrip(sizes, data):
    a = Alphabet.product(*sizes)
    idx = data.draw(st.integers(0, a.size - 1))
    assert a.encode(a.decode(idx)) == idx


def test_alphabet_first_factor_most_significant():
    a = Alphabet.product(2, 3)
    assert a.decode(4) == (1, 1)
    with pytest.raises(ProbError):
        a.encode((2, 0))


@given(pmf_pairs())
def test_kl_matches_scipy(pq):
    p, q = pq
    dv = divergences(Pmf(p), Pmf(q), order=2.0)
    assert dv.kl == pytest.approx(stats.entropy(p, q, base=2), abs=1e-12)
    assert dv.tv == pytest.approx(0.5 * np.abs(p - q).sum(), abs=1e-15)


@given(pmf_pairs(), st.floats(1.05, 3.0))
def test_renyi_at_least_kl(pq, order):
    p, q = pq
    dv = divergences(Pmf(p), Pmf(q), order=order)
    assert dv.renyi >= dv.kl - 1e-12
    assert 0.0 <= dv.tv <= 1.0


def test_divergence_infinite_off_support():
    dv = divergences(Pmf(np.array([0.5, 0.5])), Pmf(np.array([1.0, 0.0])))
    assert math.isinf(dv.kl) and dv.tv == 0.5


@given(pmf_arrays(), st.data())
def test_mutual_information_equals_entropy_identity(p, data):
    k = data.draw(kernels(n_in=p.size, n_out=3))
    joint = JointPmf(p[:, None] * k, ("x", "y"))
    h_x = stats.entropy(p, base=2)
    h_y = stats.entropy(p @ k, base=2)
    h_xy = stats.entropy(joint.p.ravel(), base=2)
    assert joint.mutual_information("x", "y") == pytest.approx(h_x + h_y - h_xy, abs=1e-10)


def test_info_density_values():
    joint = Kernel(np.eye(2)).joint(Pmf.uniform(2))
    i = joint.info_density("x", "y")
    assert i[0, 0] == 1.0 and np.isneginf(i[0, 1])


def test_conditional_rows_are_pmfs(rng):
    arr = rng.random((2, 3, 4))
    joint = JointPmf(arr / arr.sum(), ("a", "b", "c"))
    cond = joint.conditional("c", ("a", "b"))
    assert cond.shape == (2, 3, 4)
    np.testing.assert_allclose(cond.sum(axis=-1), 1.0)
    back = cond * joint.marginal(("a", "b")).p[..., None]
    np.testing.assert_allclose(back, joint.p, atol=1e-15)


def test_conditional_info_density_chain_rule(rng):
    arr = rng.random((2, 2, 3))
    joint = JointPmf(arr / arr.sum(), ("a", "b", "c"))
    lhs = joint.mutual_information("a", ("b", "c"))
    rhs = joint.mutual_information("a", "b") + joint.mutual_information("a", "c", given="b")
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_extend_then_marginal():
    joint = JointPmf(np.array([0.25, 0.75]), ("s",)).extend(np.array([[0.9, 0.1], [0.2, 0.8]]), ("s",), "u")
    np.testing.assert_allclose(joint.pmf("u").weights, [0.375, 0.625])


def test_power_matches_kron(rng):
    w = rng.dirichlet(np.ones(3))
    p = power(Pmf(w), 3)
    np.testing.assert_allclose(p.weights, np.kron(np.kron(w, w), w))
    k = Kernel(np.array([[0.9, 0.1], [0.3, 0.7]]))
    np.testing.assert_allclose(kernel_power(k, 2).matrix, np.kron(k.matrix, k.matrix))


def test_tensor_power_matches_kron(rng):
    arr = rng.random((2, 3))
    np.testing.assert_allclose(tensor_power(arr, 2), np.kron(arr, arr))


def test_power_map_digitwise():
    table = np.array([[0, 1], [1, 0]])
    big = power_map(table, 3, 2)
    for a in range(8):
        for b in range(8):
            da, db = [(a >> s) & 1 for s in (2, 1, 0)], [(b >> s) & 1 for s in (2, 1, 0)]
            want = sum(table[x, y] << s for x, y, s in zip(da, db, (2, 1, 0)))
            assert big[a, b] == want


def test_power_distortion_is_letter_average():
    d = np.array([[0.0, 1.0], [1.0, 0.0]])
    big = power_distortion(d, 3)
    assert big[0b101, 0b011] == pytest.approx(2 / 3)
    assert big[5, 5] == 0.0


def test_atom_budget_env(monkeypatch):
    monkeypatch.setenv(ATOM_BUDGET_ENV, "100")
    assert atom_budget() == 100
    with pytest.raises(CapacityError):
        check_budget(101)
    with pytest.raises(CapacityError):
        power(Pmf.uniform(2), 7)
    monkeypatch.setenv(ATOM_BUDGET_ENV, "-3")
    with pytest.raises(ProbError):
        atom_budget()
    monkeypatch.delenv(ATOM_BUDGET_ENV)
    assert atom_budget() == 2**24


def test_rn_ratio_conventions():
    r = rn_ratio([0.0, 1.0, 2.0], [0.0, 0.0, 4.0])
    assert r[0] == 0.0 and math.isinf(r[1]) and r[2] == 0.5


def test_absolute_continuity_detected():
    joint = JointPmf(np.array([[0.5, 0.0], [0.0, 0.5]]), ("x", "y"))
    assert joint.mutual_information("x", "y") == pytest.approx(1.0)
    with pytest.raises(AbsoluteContinuityError):
        from pmllab.race_process import density
        density(FiniteMeasure(np.array([1.0, 0.0])), Pmf(np.array([0.5, 0.5])))


def test_entropy_and_tv():
    assert entropy(Pmf.uniform(8)) == pytest.approx(3.0)
    assert total_variation(Pmf.uniform(2), Pmf.point(2, 0)) == 0.5


def test_json_loaders():
    p = load_pmf(json.dumps({"alphabet": ["a", "b"], "weights": [0.25, 0.75]}))
    assert p.alphabet.label(1) == "b"
    k = load_kernel({"rows": [[1, 0], [0.5, 0.5]]})
    assert k.n_out == 2
    with pytest.raises(ProbError):
        load_kernel({"rows": [[1], [0.5, 0.5]]})
    with pytest.raises(ProbError):
        load_pmf({"alphabet": ["a"]})
