"""
Tests for the retrying run executor.
"""
from app.core.result import DivergenceFailure, Err, Ok, SystemError
from app.services.run_executor import RunExecutor


def _flaky(outcomes):
    calls = []

    def task(**kwargs):
        calls.append(kwargs)
        return outcomes[len(calls) - 1]

    return task, calls


def test_transient_system_error_is_retried():
    task, calls = _flaky([Err(SystemError(error=OSError("disk full"))), Ok("done")])
    result = RunExecutor(max_retries=3, initial_delay=0.0).run(task, run="a")
    assert result == Ok("done")
    assert calls == [{"run": "a"}, {"run": "a"}]


def test_divergence_is_returned_immediately():
    task, calls = _flaky([Err(DivergenceFailure(error=RuntimeError("nan")))])
    result = RunExecutor(max_retries=3, initial_delay=0.0).run(task)
    assert isinstance(result.error_type, DivergenceFailure)
    assert len(calls) == 1


def test_retries_are_bounded():
    failure = Err(SystemError(error=OSError("disk full")))
    task, calls = _flaky([failure, failure, failure])
    result = RunExecutor(max_retries=2, initial_delay=0.0).run(task)
    assert result is failure
    assert len(calls) == 2


def test_unexpected_exception_becomes_system_error():
    def task():
        raise RuntimeError("boom")

    result = RunExecutor(max_retries=3, initial_delay=0.0).run(task)
    assert isinstance(result.error_type, SystemError)
    assert "boom" in result.error_message


def test_plan_retry_rewrites_arguments_for_the_next_attempt():
    failure = Err(SystemError(error=OSError("disk full")))
    task, calls = _flaky([failure, failure, Ok("done")])
    seen = []

    def plan(err, kwargs):
        seen.append(err)
        return {**kwargs, "attempt": kwargs.get("attempt", 1) + 1}

    result = RunExecutor(max_retries=3, initial_delay=0.0).run(task, plan_retry=plan, run="a")
    assert result == Ok("done")
    assert calls == [{"run": "a"}, {"run": "a", "attempt": 2}, {"run": "a", "attempt": 3}]
    assert seen == [failure, failure]


def test_plan_retry_is_not_called_for_permanent_failures():
    task, _ = _flaky([Err(DivergenceFailure(error=RuntimeError("nan")))])
    planned = []
    RunExecutor(max_retries=3, initial_delay=0.0).run(task, plan_retry=lambda err, kw: planned.append(err) or kw)
    assert planned == []
