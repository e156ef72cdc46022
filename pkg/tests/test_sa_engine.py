"""Tests for the stochastic approximation recursion engine."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sacs.numerics import SymMatrix
from sacs.sa_engine import (
    Datum,
    DivergenceError,
    ModelSpec,
    RngStream,
    SaState,
    StepSchedule,
    default_model,
    grad_oracle,
    jac_oracle,
    run_lockstep,
    run_trajectory,
    sa_step,
    sample_data_block,
    sample_datum,
    step_size,
    validate_rate_condition,
)


# ------------------------------------------------------------- schedule


def test_step_size_values():
    assert step_size(StepSchedule(0.5, 0.67), 0) == 0.5
    # frozen: 0.5 * 1000**(-0.67)
    assert step_size(StepSchedule(0.5, 0.67), 999) == pytest.approx(
        0.0048861861047790524, rel=1e-15
    )
    # eta0 * 4**(-3/4) = eta0 * 2**(-3/2)
    assert step_size(StepSchedule(1.0, 0.75), 3) == pytest.approx(2.0**-1.5, rel=1e-15)
    assert step_size(StepSchedule(0.0, 0.8), 17) == 0.0


def test_step_schedule_validation():
    for eta0, a in ((-1.0, 0.7), (math.nan, 0.7), (1.0, 0.5), (1.0, 1.0), (1.0, 0.2)):
        with pytest.raises(ValueError):
            StepSchedule(eta0, a)


def test_step_size_decreasing():
    s = StepSchedule(2.0, 0.6)
    vals = [step_size(s, t) for t in range(200)]
    assert all(u > v for u, v in zip(vals, vals[1:]))


# ------------------------------------------------------- rate condition


@pytest.mark.parametrize(
    "a,lam,p,linear,expected",
    [
        (0.67, 1.0, math.inf, True, None),
        (0.45, 1.0, 10.0, True, None),
        (0.9, 1.0, 10.0, True, "a >= (p-1)/p"),
        (0.0, 1.0, 10.0, True, "a <= 0"),
        (-0.1, 1.0, math.inf, True, "a <= 0"),
        (0.6, 1.0, math.inf, False, None),
        (0.6, 1.0, 2.0, False, "p <= (1+lambda)/lambda"),
        (0.5, 1.0, 10.0, False, "a <= 1/(1+lambda)"),
        (0.7, 0.5, 4.0, False, None),
        (0.8, 0.5, 4.0, False, "a >= (p-1)/p"),
        (0.7, 0.5, 3.0, False, "p <= (1+lambda)/lambda"),
    ],
)
def test_validate_rate_condition(a, lam, p, linear, expected):
    assert validate_rate_condition(a, lam, p, linear) == expected


def test_validate_rate_condition_domain():
    for p in (1.0, 0.5, -2.0):
        with pytest.raises(ValueError):
            validate_rate_condition(0.7, 1.0, p, True)
    for lam in (0.0, 1.5, -0.2):
        with pytest.raises(ValueError):
            validate_rate_condition(0.7, lam, 10.0, False)


# ---------------------------------------------------------------- models


def test_default_models():
    lin = default_model("linear", 3)
    assert np.array_equal(lin.theta_star, [1.0, 2.0, 3.0])
    assert lin.noise_sd == 4.0 and lin.cov_halfwidth == 10.0
    logi = default_model("logistic", 2)
    assert np.array_equal(logi.theta_star, [1.0, 2.0])
    assert logi.cov_halfwidth == 0.5
    with pytest.raises(ValueError):
        default_model("probit")


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("linear", 2, np.array([1.0]))
    with pytest.raises(ValueError):
        ModelSpec("linear", 1, np.array([math.nan]))
    with pytest.raises(ValueError):
        ModelSpec("linear", 1, np.array([1.0]), noise_sd=-1.0)
    with pytest.raises(ValueError):
        ModelSpec("linear", 1, np.array([1.0]), cov_halfwidth=0.0)
    with pytest.raises(ValueError):
        Datum(x=np.array([math.inf]), y=0.0)


# ------------------------------------------------------------ rng streams


def test_rng_stream_reproducible_and_distinct():
    a = RngStream(12, 3).generator.uniform(size=8)
    b = RngStream(12, 3).generator.uniform(size=8)
    c = RngStream(12, 4).generator.uniform(size=8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_rng_stream_validation():
    for seed, stream in ((-1, 0), (0, -1), (2**64, 0), (1.5, 0)):
        with pytest.raises(ValueError):
            RngStream(seed, stream)


# ------------------------------------------------------------- sampling


def test_sample_linear_moments():
    model = default_model("linear", 1)
    xs, ys = sample_data_block(model, RngStream(5, 0).generator, 1_000_000)
    assert np.abs(xs).max() <= 10.0
    # E[y] = 0, sd(y) = sqrt(100/3 + 16); tolerance is 3 standard errors
    assert abs(ys.mean()) < 3.0 * math.sqrt(100.0 / 3.0 + 16.0) / 1000.0
    # E[X^2] = 100/3, var(X^2) = 2000 - (100/3)^2
    se = math.sqrt((2000.0 - (100.0 / 3.0) ** 2) / 1_000_000)
    assert (xs**2).mean() == pytest.approx(100.0 / 3.0, abs=3.0 * se)


def test_sample_logistic_moments():
    model = default_model("logistic", 1)
    xs, ys = sample_data_block(model, RngStream(6, 0).generator, 200_000)
    assert np.abs(xs).max() <= 0.5
    assert set(np.unique(ys)) <= {0.0, 1.0}
    # E[y] = E[sigmoid(X)] = 1/2 by symmetry of the covariate law
    assert abs(ys.mean() - 0.5) < 3.0 * 0.5 / math.sqrt(200_000)


def test_sample_datum_matches_block_head():
    model = default_model("linear", 2)
    xi = sample_datum(model, RngStream(9, 1))
    xs, ys = sample_data_block(model, RngStream(9, 1).generator, 1)
    assert np.array_equal(xi.x, xs[0]) and xi.y == ys[0]


# ------------------------------------------------------------- oracles


def test_grad_oracle_values():
    lin = ModelSpec("linear", 1, np.array([1.0]))
    # residual 5 - 2*1 = 3, gradient -3*2
    assert grad_oracle(lin, np.array([1.0]), Datum(np.array([2.0]), 5.0))[0] == -6.0
    # zero residual at the root of a noiseless model
    model = ModelSpec("linear", 2, np.array([1.0, -2.0]), noise_sd=0.0)
    xi = sample_datum(model, RngStream(3, 0))
    assert np.array_equal(grad_oracle(model, model.theta_star, xi), [0.0, 0.0])
    # logistic gradient vanishes when y equals the predicted probability
    logi = default_model("logistic", 1)
    x = np.array([0.3])
    xv = np.array([0.4])
    y = 1.0 / (1.0 + math.exp(-0.4 * 0.3))
    assert grad_oracle(logi, x, Datum(xv, y)) == pytest.approx([0.0], abs=1e-15)


def test_jac_oracle_values():
    lin = ModelSpec("linear", 1, np.array([1.0]))
    assert jac_oracle(lin, np.array([0.0]), Datum(np.array([3.0]), 1.0)).entries[0, 0] == 9.0
    logi = default_model("logistic", 1)
    # sigmoid'(0) * X^2 = 0.25 * 4
    j = jac_oracle(logi, np.array([0.0]), Datum(np.array([2.0]), 1.0))
    assert j.entries[0, 0] == 1.0


def test_oracle_dimension_mismatch():
    model = default_model("linear", 1)
    with pytest.raises(ValueError):
        grad_oracle(model, np.array([0.0, 0.0]), Datum(np.array([1.0]), 0.0))
    with pytest.raises(ValueError):
        jac_oracle(model, np.array([0.0]), Datum(np.array([1.0, 2.0]), 0.0))


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(["linear", "logistic"]),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_jacobian_is_gradient_derivative(kind, dim, seed):
    # central differences of grad_oracle reproduce jac_oracle columnwise
    model = default_model(kind, dim)
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, size=dim)
    xi = sample_datum(model, RngStream(seed, 7))
    jac = jac_oracle(model, x, xi).entries
    h = 1e-5
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = h
        num = (grad_oracle(model, x + e, xi) - grad_oracle(model, x - e, xi)) / (2.0 * h)
        assert np.abs(num - jac[:, j]).max() < 1e-6 * max(1.0, np.abs(jac).max())


# --------------------------------------------------------------- sa_step


def test_sa_step_frozen_dynamics():
    model = default_model("linear", 1)
    st0 = SaState.initial(1, x0=np.array([2.0]))
    out = sa_step(st0, StepSchedule(0.0, 0.7), model, RngStream(0, 0))
    assert out.t == 1
    assert np.array_equal(out.x, [2.0]) and np.array_equal(out.xbar, [2.0])
    # the datum is still consumed and accumulated
    assert out.h_sum.entries[0, 0] > 0.0


def test_sa_step_noiseless_fixed_point():
    model = ModelSpec("linear", 2, np.array([1.0, 2.0]), noise_sd=0.0, cov_halfwidth=1.0)
    stt = SaState.initial(2, x0=model.theta_star)
    rng = RngStream(4, 0)
    sched = StepSchedule(0.1, 0.7)
    for _ in range(50):
        stt = sa_step(stt, sched, model, rng)
    assert np.array_equal(stt.x, model.theta_star)
    assert np.array_equal(stt.xbar, model.theta_star)


def test_sa_step_averaging_identity():
    # t*xbar_t - (t-1)*xbar_{t-1} recovers x_t; x0 is excluded from the mean
    model = default_model("linear", 2)
    stt = SaState.initial(2)
    rng = RngStream(11, 0)
    sched = StepSchedule(0.01, 0.67)
    prev_bar = stt.xbar
    for _ in range(30):
        stt = sa_step(stt, sched, model, rng)
        lhs = stt.t * stt.xbar - (stt.t - 1) * prev_bar
        assert np.abs(lhs - stt.x).max() <= 1e-9 * (1.0 + np.abs(stt.x).max())
        prev_bar = stt.xbar


def test_sa_step_accumulators_one_step():
    model = ModelSpec("linear", 1, np.array([1.0]), noise_sd=4.0, cov_halfwidth=10.0)
    xi = sample_datum(model, RngStream(2, 0))
    stt = sa_step(SaState.initial(1), StepSchedule(0.01, 0.67), model, RngStream(2, 0))
    g = grad_oracle(model, np.zeros(1), xi)
    assert stt.h_sum.entries[0, 0] == xi.x[0] ** 2
    assert stt.s_sum.entries[0, 0] == g[0] ** 2
    assert stt.x[0] == -0.01 * g[0]


def test_sa_step_divergence_raises():
    model = default_model("linear", 1)
    stt = SaState.initial(1)
    rng = RngStream(0, 0)
    sched = StepSchedule(1e150, 0.67)
    with pytest.raises(DivergenceError) as exc:
        for _ in range(50):
            stt = sa_step(stt, sched, model, rng)
    assert exc.value.t >= 1 and exc.value.norm == math.inf


def test_sa_state_validation():
    with pytest.raises(ValueError):
        SaState.initial(0)
    with pytest.raises(ValueError):
        SaState(
            t=-1,
            x=np.zeros(1),
            xbar=np.zeros(1),
            h_sum=SymMatrix([[0.0]]),
            s_sum=SymMatrix([[0.0]]),
        )


# ---------------------------------------------------------- trajectories


def test_run_trajectory_deterministic():
    model = default_model("linear", 2)
    sched = StepSchedule(0.01, 0.67)
    a = run_trajectory(model, sched, 300, [100, 300], rng=RngStream(7, 3))
    b = run_trajectory(model, sched, 300, [100, 300], rng=RngStream(7, 3))
    assert len(a) == len(b) == 2
    for pa, pb in zip(a, b):
        assert pa.t == pb.t
        assert np.array_equal(pa.xbar, pb.xbar)
        assert np.array_equal(pa.h_hat.entries, pb.h_hat.entries)
        assert pa.err_norm == pb.err_norm


def test_run_trajectory_empty_and_validation():
    model = default_model("linear", 1)
    sched = StepSchedule(0.01, 0.67)
    assert run_trajectory(model, sched, 0, []) == ()
    for bad in ([0], [5, 5], [5, 3], [11]):
        with pytest.raises(ValueError):
            run_trajectory(model, sched, 10, bad)
    with pytest.raises(ValueError):
        run_trajectory(model, sched, -1, [])
    with pytest.raises(ValueError):
        run_trajectory(model, sched, 10, [5], x0=np.zeros(3))


def test_run_trajectory_divergence():
    model = default_model("linear", 1)
    with pytest.raises(DivergenceError):
        run_trajectory(model, StepSchedule(1e150, 0.67), 100, [100], rng=RngStream(0, 0))


def test_run_trajectory_converges_to_root():
    # 30 repetitions at T = 20000 all land within 0.1 of theta_star
    model = default_model("linear", 1)
    sched = StepSchedule(0.01, 0.67)
    errs = []
    for r in range(30):
        (pt,) = run_trajectory(model, sched, 20_000, [20_000], rng=RngStream(123, r))
        errs.append(pt.err_norm)
    assert max(errs) < 0.1


def test_lockstep_matches_chunked_runs():
    # repetition r's trace must not depend on how generators are batched
    model = default_model("linear", 2)
    sched = StepSchedule(0.01, 0.67)
    T = 150

    def final_xbars(gen_lists):
        out = []
        for gens in gen_lists:
            rows = {}

            def visit(tt, x, xbar, h_sum, s_sum, alive):
                rows[tt] = xbar.copy()

            run_lockstep(model, sched, T, np.zeros(2), gens, [T], visit)
            out.append(rows[T])
        return np.vstack(out)

    gens_a = [[RngStream(42, r).generator for r in range(3)]]
    gens_b = [[RngStream(42, r).generator] for r in range(3)]
    assert np.array_equal(final_xbars(gens_a), final_xbars(gens_b))


def test_lockstep_freezes_divergent_reps():
    # one exploding schedule: every repetition freezes to nan, none raises
    model = default_model("linear", 1)
    sched = StepSchedule(1e150, 0.67)
    gens = [RngStream(1, r).generator for r in range(4)]
    seen = {}

    def visit(tt, x, xbar, h_sum, s_sum, alive):
        seen["alive"] = alive.copy()
        seen["x"] = x.copy()

    diverged_at = run_lockstep(model, sched, 60, np.zeros(1), gens, [60], visit)
    assert np.all(diverged_at >= 1)
    assert not seen["alive"].any()
    assert not np.isfinite(seen["x"]).any()


def test_lockstep_rejects_bad_eval_times():
    model = default_model("linear", 1)
    sched = StepSchedule(0.01, 0.67)
    gens = [RngStream(0, 0).generator]
    for bad in ([0], [3, 2], [7]):
        with pytest.raises(ValueError):
            run_lockstep(model, sched, 5, np.zeros(1), gens, bad, lambda *a: None)


def test_l2_decay_probe():
    # mean squared error of the raw iterate, scaled by the step size, stays
    # bounded between the two checkpoints (within a factor of 2)
    model = default_model("linear", 1)
    sched = StepSchedule(0.01, 0.67)
    reps, T = 200, 10_000
    gens = [RngStream(77, r).generator for r in range(reps)]
    ratios = {}

    def visit(tt, x, xbar, h_sum, s_sum, alive):
        mse = float(np.mean((x[alive, 0] - 1.0) ** 2))
        ratios[tt] = mse / step_size(sched, tt - 1)

    run_lockstep(model, sched, T, np.zeros(1), gens, [1000, 10_000], visit)
    assert 0.0 < ratios[10_000] <= 2.0 * ratios[1000]
