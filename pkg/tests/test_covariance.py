"""Tests for the streaming plug-in covariance estimator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sacs.covariance import (
    SANDWICH_RTOL,
    plugin_estimate,
    plugin_rate_exponent,
    sandwich_from_moments,
)
from sacs.numerics import SymMatrix
from sacs.sa_engine import (
    RngStream,
    SaState,
    StepSchedule,
    default_model,
    run_lockstep,
    run_trajectory,
    sample_datum,
)


def state_with(t, h, s):
    d = np.asarray(h).shape[0]
    return SaState(
        t=t,
        x=np.zeros(d),
        xbar=np.zeros(d),
        h_sum=SymMatrix(np.asarray(h, dtype=float) * t),
        s_sum=SymMatrix(np.asarray(s, dtype=float) * t),
    )


def test_single_datum_estimate():
    # after one linear step from x0 = 0: h_hat = X^2, s_hat = (yX)^2
    model = default_model("linear", 1)
    xi = sample_datum(model, RngStream(2, 0))
    (pt,) = run_trajectory(model, StepSchedule(0.01, 0.67), 1, [1], rng=RngStream(2, 0))
    assert pt.h_hat.entries[0, 0] == xi.x[0] ** 2
    assert pt.s_hat.entries[0, 0] == (xi.y * xi.x[0]) ** 2
    assert not pt.singular
    # d = 1 sandwich is s / h^2
    expected = (xi.y * xi.x[0]) ** 2 / xi.x[0] ** 4
    assert pt.sandwich.entries[0, 0] == pytest.approx(expected, rel=1e-14)


def test_plugin_estimate_normalizes_by_t():
    est = plugin_estimate(state_with(4, [[2.0]], [[8.0]]))
    assert est.h_hat.entries[0, 0] == 2.0
    assert est.s_hat.entries[0, 0] == 8.0
    assert est.sandwich.entries[0, 0] == pytest.approx(2.0, rel=1e-14)
    assert est.t == 4


def test_plugin_estimate_requires_positive_t():
    with pytest.raises(ValueError):
        plugin_estimate(SaState.initial(1))


def test_singular_flag_cases():
    sw, flag = sandwich_from_moments(SymMatrix([[0.0]]), SymMatrix([[1.0]]))
    assert flag and sw is None
    sw, flag = sandwich_from_moments(SymMatrix([[-1.0]]), SymMatrix([[1.0]]))
    assert flag and sw is None
    # eigenvalue ratio at the guard: 9e-9 <= 1e-8 singular, 2e-8 fine
    sw, flag = sandwich_from_moments(SymMatrix(np.diag([1.0, 9e-9])), SymMatrix.identity(2))
    assert flag and sw is None
    sw, flag = sandwich_from_moments(SymMatrix(np.diag([1.0, 2e-8])), SymMatrix.identity(2))
    assert not flag and sw is not None
    assert SANDWICH_RTOL == 1e-8


def test_plugin_estimate_singular_passthrough():
    est = plugin_estimate(state_with(3, np.zeros((2, 2)), np.eye(2)))
    assert est.singular_flag and est.sandwich is None


@settings(max_examples=50, deadline=None)
@given(
    st.integers(min_value=1, max_value=4),
    st.floats(min_value=0.1, max_value=50.0),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_sandwich_scale_equivariance(d, c, seed):
    # G -> c G maps (h, s) -> (c h, c^2 s) and leaves the sandwich fixed
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((d, d))
    h = SymMatrix(a @ a.T + 0.5 * np.eye(d))
    b = rng.standard_normal((d, d))
    s = SymMatrix(b @ b.T + 0.1 * np.eye(d))
    base, _ = sandwich_from_moments(h, s)
    scaled, _ = sandwich_from_moments(
        SymMatrix(c * h.entries), SymMatrix(c * c * s.entries)
    )
    assert np.abs(scaled.entries - base.entries).max() <= 1e-9 * np.abs(base.entries).max()


def test_sandwich_is_exactly_symmetric():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 3))
    h = SymMatrix(a @ a.T + np.eye(3))
    s = SymMatrix(np.eye(3) + 0.3 * np.ones((3, 3)))
    sw, _ = sandwich_from_moments(h, s)
    assert np.array_equal(sw.entries, sw.entries.T)


def test_jacobian_estimate_accuracy_improves_with_t():
    # median |h_hat - 100/3| over 200 repetitions shrinks from t=1e3 to t=1e5
    model = default_model("linear", 1)
    sched = StepSchedule(0.01, 0.67)
    reps = 200
    errs = {}
    for start in range(0, reps, 100):
        gens = [RngStream(31, r).generator for r in range(start, start + 100)]
        chunk_errs = {}

        def visit(tt, x, xbar, h_sum, s_sum, alive):
            chunk_errs[tt] = np.abs(h_sum[alive, 0, 0] / tt - 100.0 / 3.0)

        run_lockstep(model, sched, 100_000, np.zeros(1), gens, [1000, 100_000], visit)
        for tt, v in chunk_errs.items():
            errs.setdefault(tt, []).append(v)

    med_lo = np.median(np.concatenate(errs[1000]))
    med_hi = np.median(np.concatenate(errs[100_000]))
    assert med_hi < med_lo


@pytest.mark.parametrize(
    "p_bar,a,expected",
    [(2.0, 0.5, 0.25), (np.inf, 0.8, 0.4), (1.25, 0.9, 0.2)],
)
def test_plugin_rate_exponent(p_bar, a, expected):
    assert plugin_rate_exponent(p_bar, a) == pytest.approx(expected, rel=1e-12)


def test_plugin_rate_exponent_domain():
    for p_bar, a in ((1.0, 0.5), (0.5, 0.5), (2.0, 0.0), (2.0, 1.0)):
        with pytest.raises(ValueError):
            plugin_rate_exponent(p_bar, a)
