import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmllab.core_prob import CapacityError, ProbError
from pmllab.instances import BUILTINS, builtin, load_instance
from pmllab.schemes import (
    SchemeConfig,
    _contract,
    _outer,
    _outer_sum,
    phi_kmax,
    simulate,
    simulate_channel,
    simulate_mac,
    wilson,
)


def test_wilson_interval():
    lo, hi = wilson(0, 100)
    assert lo == pytest.approx(0.0, abs=1e-15) and 0.03 < hi < 0.04
    lo, hi = wilson(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    with pytest.raises(ProbError):
        wilson(0, 0)


@given(st.integers(1, 3), st.integers(2, 3), st.integers(2, 3), st.integers(0, 2**31))
def test_letterwise_helpers_match_kron(n, a, c, seed):
    rng = np.random.default_rng(seed)
    rows = rng.random((2, n, a))
    mats = rng.random((2, n, a, c))
    w = rng.random((2, a**n))
    for b in range(2):
        np.testing.assert_allclose(_outer(rows)[b], reduce(np.kron, rows[b]))
        ones = [np.ones(a)] * n
        want = sum(reduce(np.kron, [rows[b, j] if j == i else ones[j] for j in range(n)]) for i in range(n))
        np.testing.assert_allclose(_outer_sum(rows)[b], want)
        big = reduce(np.kron, mats[b])
        np.testing.assert_allclose(_contract(w, mats)[b], w[b] @ big)


def test_noiseless_error_rate():
    res = simulate_channel(SchemeConfig(builtin("noiseless-l2"), trials=20000, seed=5))
    assert abs(res.estimate - 1 / 3) <= 3 * res.halfwidth
    assert res.bound == pytest.approx(0.5) and res.dominated()


def test_deterministic_across_workers_and_chunks(monkeypatch):
    inst = builtin("bsc-n8-l4")
    a = simulate(SchemeConfig(inst, trials=3000, seed=9))
    b = simulate(SchemeConfig(inst, trials=3000, seed=9, workers=2))
    monkeypatch.setattr("pmllab.schemes.CHUNK_WORK", 2**12)
    c = simulate(SchemeConfig(inst, trials=3000, seed=9))
    assert a.failures == b.failures == c.failures


def test_trace_rows():
    res = simulate(SchemeConfig(builtin("noiseless-l2"), trials=50, seed=1, trace=3))
    assert [r["trial"] for r in res.trace] == [0, 1, 2]
    assert "fail" in res.trace[0]


def test_wrong_setting_rejected():
    with pytest.raises(ProbError):
        simulate_mac(SchemeConfig(builtin("noiseless-l2"), trials=10))
    with pytest.raises(ProbError):
        simulate(SchemeConfig(builtin("noiseless-l2"), trials=0))


def test_resolvability_independent_output_has_zero_tv():
    doc = dict(BUILTINS["resolvability-bsc-l256"])
    doc["ch"] = [[0.3, 0.7], [0.3, 0.7]]
    doc["L"], doc["J"] = 16, 4
    res = simulate(SchemeConfig(load_instance(doc), trials=200, seed=2))
    assert res.estimate == pytest.approx(0.0, abs=1e-12)


def test_phi_tolerance_capacity():
    assert phi_kmax(0.9) >= 1
    with pytest.raises(CapacityError):
        phi_kmax(1e-9)
    with pytest.raises(CapacityError):
        simulate(SchemeConfig(builtin("mac-adder-n8"), trials=10, phi_tol=1e-9))


def test_bc_common_without_common_part_matches_marton():
    m = dict(BUILTINS["marton-n8"], n=4)
    marton = load_instance(m)
    bc = load_instance({
        "setting": "bc_common", "n": 4, "p_u012": [m["p_u12"]], "x_fn": [m["x_fn"]], "ch2": m["ch2"],
        "L0": 1, "L1": m["L1"], "L2": m["L2"], "J": m["J"], "kmax": 1,
    })
    a = simulate(SchemeConfig(marton, trials=20000, seed=4))
    b = simulate(SchemeConfig(bc, trials=20000, seed=4))
    sa = math.sqrt(a.estimate * (1 - a.estimate) / a.trials)
    sb = math.sqrt(b.estimate * (1 - b.estimate) / b.trials)
    assert abs(a.estimate - b.estimate) <= 4 * math.hypot(sa, sb) + 1e-12


def test_channel_rank_improves_with_fewer_messages():
    inst = builtin("rank-bsc-n8-l4")
    ests = [simulate(SchemeConfig(inst, trials=4000, seed=3, fixed_message=m)) for m in (1, 4, 16)]
    assert all(r.bound_name == "thm2_fixed" and r.dominated() for r in ests)
    assert ests[0].bound <= ests[1].bound <= ests[2].bound
    assert ests[0].estimate <= ests[2].estimate


def test_to_json_fields():
    doc = simulate(SchemeConfig(builtin("noiseless-l2"), trials=100, seed=0)).to_json()
    assert {"estimate", "ci_lo", "ci_hi", "bound", "dominated"} <= set(doc)
