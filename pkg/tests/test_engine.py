import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from libra_sim.domain import AllocationMode, ClusterConfig, Job, JobState
from libra_sim.engine import ConfigError, Event, EventKind, run
from libra_sim.node_ledger import NodeState, dispatch, reserve
from libra_sim.policy import FifoPolicy, LibraPolicy, Outcome
from libra_sim.report import job_rows, summary

CAP = 100.0
ONE = ClusterConfig(1, CAP)
RICH = 1e12


def J(jid, arrival, estimate, deadline):
    return Job(jid, arrival, estimate * CAP, deadline, RICH)


def test_empty_trace():
    res = run([], ONE, LibraPolicy())
    assert res.counts() == {
        "total": 0,
        "accepted": 0,
        "rejected_budget": 0,
        "rejected_deadline": 0,
        "completed_by_deadline": 0,
    }
    assert res.audit() == []


def test_single_job_runs_at_full_share():
    res = run([J(0, 5.0, 10.0, 20.0)], ONE, LibraPolicy())
    rec = res.records[0]
    assert rec.dispatch_time == 5.0
    assert rec.completion_time == pytest.approx(15.0, abs=1e-12)
    assert rec.met_deadline
    assert rec.state is JobState.COMPLETED


def test_single_job_deadline_exact_finishes_at_deadline():
    res = run([J(0, 0.0, 10.0, 20.0)], ONE, LibraPolicy(allocation_mode=AllocationMode.DEADLINE_EXACT))
    assert res.records[0].completion_time == pytest.approx(20.0, rel=1e-12)
    assert res.records[0].met_deadline


def test_two_simultaneous_jobs_overcommit():
    # each needs 6 s of CPU within 10 s: 0.6 + 0.6 > 1
    res = run([J(0, 0.0, 6.0, 10.0), J(1, 0.0, 6.0, 10.0)], ONE, LibraPolicy())
    assert [r.decision.outcome for r in res.records] == [Outcome.ASSIGNED, Outcome.REJECTED_DEADLINE]
    assert res.records[1].state is JobState.REJECTED


def test_completion_processed_before_same_time_arrival():
    # job 0 ends exactly at t=10; job 1 arrives at t=10 and needs the whole CPU
    trace = [J(0, 0.0, 10.0, 50.0), J(1, 10.0, 5.0, 5.0)]
    res = run(trace, ONE, LibraPolicy())
    assert res.records[0].completion_time == 10.0
    assert res.records[1].decision.outcome is Outcome.ASSIGNED


def test_event_ordering_key():
    a = Event(5.0, EventKind.ARRIVAL, 0)
    c = Event(5.0, EventKind.COMPLETION, 7)
    h = Event(5.0, EventKind.HORIZON, 1)
    assert sorted([h, a, c]) == [c, a, h]
    assert Event(4.0, EventKind.HORIZON, 9) < c


def test_fifo_time_to_complete_is_wait_plus_estimate():
    trace = [J(0, 0.0, 10.0, 100.0), J(1, 1.0, 5.0, 100.0), J(2, 2.0, 7.0, 100.0)]
    res = run(trace, ONE, FifoPolicy())
    for rec in res.records:
        wait = rec.dispatch_time - rec.job.arrival
        assert rec.time_to_complete == pytest.approx(wait + rec.job.estimate(CAP), abs=1e-9)
    assert [r.dispatch_time for r in res.records] == pytest.approx([0.0, 10.0, 15.0])
    assert all(s.utilization in (0.0, 1.0) for s in res.samples)


def test_utilization_samples():
    res = run([], ONE, LibraPolicy())
    assert res.samples == []
    res = run([J(0, 0.0, 10.0, 100.0)], ONE, FifoPolicy())
    assert res.samples[0].utilization == 1.0
    assert res.samples[-1].utilization == 0.0
    node = NodeState(0, CAP)
    for jid, s in enumerate((0.3, 0.2)):
        j = J(jid, 0.0, s * 100.0, 100.0)
        reserve(node, j, 0.0)
        dispatch(node, j, 0.0, AllocationMode.DEADLINE_EXACT)
    assert node.utilization() == pytest.approx(0.5)


def test_rejected_rows_have_empty_timing_fields():
    res = run([J(0, 0.0, 6.0, 10.0), J(1, 0.0, 6.0, 10.0)], ONE, LibraPolicy())
    rows = job_rows(res)
    assert rows[1]["decision"] == "rejected_deadline"
    assert rows[1]["dispatch_time"] == rows[1]["completion_time"] == rows[1]["node"] == ""
    assert rows[0]["time_remaining_to_deadline"] != ""


def test_time_remaining_to_deadline():
    res = run([J(0, 0.0, 80.0, 100.0)], ONE, LibraPolicy())
    assert res.records[0].time_remaining_to_deadline == pytest.approx(20.0)


def test_bad_inputs():
    with pytest.raises(ConfigError):
        run([J(0, 5.0, 1.0, 10.0), J(1, 1.0, 1.0, 10.0)], ONE, LibraPolicy())
    with pytest.raises(ConfigError):
        run([J(0, 0.0, 1.0, 10.0), J(0, 1.0, 1.0, 10.0)], ONE, LibraPolicy())
    with pytest.raises(ConfigError):
        run([Job(0, 0.0, 0.0, 10.0, 1.0)], ONE, LibraPolicy())
    with pytest.raises(ConfigError):
        run([], "cluster", LibraPolicy())
    with pytest.raises(ConfigError):
        run([], ONE, object())


def test_estimate_error_flags_misses_without_crashing():
    trace = [J(0, 0.0, 10.0, 12.0), J(1, 0.0, 1.0, 50.0)]
    res = run(trace, ONE, LibraPolicy(allocation_mode=AllocationMode.DEADLINE_EXACT), estimate_error=1.5)
    assert all(r.state is JobState.COMPLETED for r in res.records)
    assert res.deadline_misses >= 1
    assert not res.exact_estimates
    assert res.audit() == []


# --- randomized properties --------------------------------------------------------

job_st = st.tuples(st.floats(0.0, 50.0), st.floats(1.0, 60.0), st.floats(1.0, 200.0))


def _trace(specs):
    return [J(i, a, e, d) for i, (a, e, d) in enumerate(sorted(specs))]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(job_st, max_size=25),
    st.integers(1, 3),
    st.sampled_from(list(AllocationMode)),
    st.sampled_from(["max-loadfree", "min-loadfree"]),
)
def test_libra_guarantees(specs, n, mode, rule):
    trace = _trace(specs)
    cluster = ClusterConfig(n, CAP)
    res = run(trace, cluster, LibraPolicy(selection_rule=rule, allocation_mode=mode))
    assert res.audit() == []
    assert res.completed_by_deadline == res.accepted
    assert all(s.utilization <= 1 + 1e-9 for s in res.samples)
    assert res.event_times == sorted(res.event_times)
    for rec in res.records:
        if rec.accepted:
            assert rec.dispatch_time == rec.job.arrival
    for nid, delivered in res.delivered.items():
        first = res.first_dispatch[nid]
        if first is None:
            assert delivered == 0.0
            continue
        assert delivered <= CAP * (res.last_event - first) * (1 + 1e-9) + 1e-6
        mine = sum(r.job.length for r in res.records if r.node_id == nid and r.accepted)
        assert delivered == pytest.approx(mine, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.lists(job_st, max_size=20), st.integers(1, 3))
def test_scaleup_never_later_than_deadline_exact(specs, n):
    trace = _trace(specs)
    cluster = ClusterConfig(n, CAP)
    up = run(trace, cluster, LibraPolicy(allocation_mode=AllocationMode.PROPORTIONAL_SCALEUP))
    ex = run(trace, cluster, LibraPolicy(allocation_mode=AllocationMode.DEADLINE_EXACT))
    for a, b in zip(up.records, ex.records):
        if a.accepted and b.accepted:
            assert a.completion_time <= b.completion_time + 1e-9 * max(1.0, b.completion_time)


@settings(max_examples=40, deadline=None)
@given(st.lists(job_st, max_size=20), st.integers(1, 3), st.booleans())
def test_fifo_guarantees(specs, n, gate):
    res = run(_trace(specs), ClusterConfig(n, CAP), FifoPolicy(apply_budget_gate=gate))
    assert res.audit() == []
    assert all(s.utilization in (0.0, 1.0) for s in res.samples)


def test_run_is_deterministic():
    from libra_sim.workload import generate, preset

    trace = generate(preset("paper-batch-100", 3))
    for pol in (LibraPolicy(), FifoPolicy()):
        a = run(trace, ClusterConfig(10), pol)
        b = run(trace, ClusterConfig(10), pol)
        assert job_rows(a) == job_rows(b)
        assert summary(a) == summary(b)
        assert [r.decision for r in a.records] == [r.decision for r in b.records]
