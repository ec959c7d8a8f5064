import numpy as np
import pytest

from stochtopo.continuation import ContinuationError, ContinuationSchedule, continuation_run
from stochtopo.mma import MmaParams, mma_solve


class TestSchedule:
    def test_default_schedule(self):
        s = ContinuationSchedule.build()
        assert len(s) == 17
        p_stages = s.stages[:11]
        beta_stages = [st for st in s.stages if st[0] == 6.0 and st != (6.0, 0.0)]
        assert [p for p, _ in p_stages] == [1 + 0.5 * k for k in range(11)]
        assert [b for _, b in s.stages[11:]] == [0.0, 4.0, 8.0, 12.0, 16.0, 20.0]
        assert len(beta_stages) == 5 and len(s.stages[11:]) == 6

    def test_tolerances_geometric(self):
        tols = np.array(ContinuationSchedule.build().tolerances)
        assert tols[0] == pytest.approx(1e-3, rel=1e-14)
        assert tols[-1] == pytest.approx(1e-4, rel=1e-14)
        ratios = tols[1:] / tols[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_without_projection(self):
        s = ContinuationSchedule.build(p_end=3.0, beta_step=0.0)
        assert s.stages == ((1.0, 0.0), (1.5, 0.0), (2.0, 0.0), (2.5, 0.0), (3.0, 0.0))

    def test_single(self):
        s = ContinuationSchedule.single(3.0, 0.0, 1e-5)
        assert s.stages == ((3.0, 0.0),) and s.tolerances == (1e-5,)

    @pytest.mark.parametrize("stages,tols", [
        ((), ()),
        (((1.0, 0.0),), (1e-3, 1e-4)),
        (((1.0, 0.0), (2.0, 0.0)), (1e-4, 1e-3)),
        (((2.0, 0.0), (1.0, 0.0)), (1e-3, 1e-4)),
        (((1.0, 4.0), (2.0, 4.0)), (1e-3, 1e-4)),
        (((1.0, 0.0),), (0.0,)),
    ])
    def test_invalid(self, stages, tols):
        with pytest.raises(ValueError):
            ContinuationSchedule(stages, tols)


def quadratic_factory(calls):
    def factory(p, beta):
        calls.append((p, beta))
        target = 0.1 * p

        def f(x):
            return float(np.sum((x - target) ** 2)), 2 * (x - target)
        return f, []
    return factory


def test_single_stage_equals_mma():
    calls = []
    x0 = np.full(5, 0.9)
    x, recs = continuation_run(quadratic_factory(calls), x0, ContinuationSchedule.single(3.0, 0.0, 1e-6))
    ref = mma_solve(quadratic_factory([])(3.0, 0.0)[0], x0, tol=1e-6)
    np.testing.assert_array_equal(x, ref.x)
    assert recs[0].iterations == ref.iterations and calls == [(3.0, 0.0)]


def test_seventeen_subproblems_warm_started():
    calls = []
    seen_x0 = []

    def factory(p, beta):
        f, c = quadratic_factory(calls)(p, beta)
        first = [True]

        def wrapped(x):
            if first[0]:
                seen_x0.append(x.copy())
                first[0] = False
            return f(x)
        return wrapped, c

    x, recs = continuation_run(factory, np.full(4, 0.9), ContinuationSchedule.build(),
                               MmaParams(max_iters=50))
    assert len(calls) == len(recs) == 17
    assert [(r.p, r.beta) for r in recs] == list(ContinuationSchedule.build().stages)
    # each stage starts where the previous one stopped
    for k in range(1, 17):
        np.testing.assert_allclose(seen_x0[k], 0.1 * recs[k - 1].p, atol=1e-3)
    assert all(r.wall_time >= 0 for r in recs)


def test_records_solve_counts():
    counter = {"n": 0}

    def factory(p, beta):
        def f(x):
            counter["n"] += 3
            return float(np.sum((x - 0.5) ** 2)), 2 * (x - 0.5)
        return f, []

    _, recs = continuation_run(factory, np.zeros(3), ContinuationSchedule.build(p_end=2.0, beta_step=0),
                               solve_count=lambda: counter["n"])
    assert [r.solves for r in recs] == [3 * r.evaluations for r in recs]


def test_failure_carries_stage():
    def factory(p, beta):
        def f(x):
            return (np.nan if p >= 2.0 else 0.0), np.zeros_like(x)
        return f, []

    with pytest.raises(ContinuationError) as info:
        continuation_run(factory, np.full(3, 0.5), ContinuationSchedule.build(p_end=3.0, beta_step=0))
    err = info.value
    assert (err.stage, err.p, err.beta) == (2, 2.0, 0.0)
    assert err.x.shape == (3,)


def test_callback_failure_carries_stage():
    def factory(p, beta):
        def f(x):
            if p >= 1.5:
                raise ZeroDivisionError("degenerate")
            return float(np.sum((x - 0.5) ** 2)), 2 * (x - 0.5)
        return f, []

    with pytest.raises(ContinuationError) as info:
        continuation_run(factory, np.full(3, 0.2), ContinuationSchedule.build(p_end=2.0, beta_step=0))
    assert (info.value.stage, info.value.p) == (1, 1.5)
    np.testing.assert_allclose(info.value.x, 0.5, atol=1e-3)
