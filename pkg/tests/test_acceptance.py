"""Acceptance suite: every criterion at its stated tolerance, one status line each."""
import json

import pytest

from tzlab import acceptance

NUMBERS = [num for num, _, _ in acceptance.CHECKS]


def _report(line, details, capsys):
    with capsys.disabled():
        print(f"\n{line}")
        for k, v in details.items():
            print(f"      {k}: {json.dumps(v, default=str)[:160]}")


@pytest.mark.parametrize("number", NUMBERS, ids=[f"criterion_{n:02d}" for n in NUMBERS])
def test_criterion(number, capsys):
    result = acceptance.run_check(number, seed=0)
    _report(result.line(), result.details, capsys)
    assert result.passed, result.details


def test_corrupted_container_is_detected(capsys):
    res = acceptance.check_checksum()
    _report(f"[{'PASS' if res['passed'] else 'FAIL'}] -- corrupted container detected", {}, capsys)
    assert res["passed"]


@pytest.mark.parametrize("seed", [1, 2])
@pytest.mark.parametrize("number", [4, 9, 10])
def test_randomized_criteria_other_seeds(number, seed):
    assert acceptance.run_check(number, seed=seed).passed
