from __future__ import annotations

import pytest

from acp_admission.engine import EvalRequest
from acp_admission.policy import default_policy
from acp_admission.stores import InMemoryStore

T0 = 1_700_000_000


def make_req(agent="a1", cap="acp:cap:data.read", resource="r1", cls="public", level=2,
             ts=T0, ctx=(), hist=()) -> EvalRequest:
    return EvalRequest(agent, cap, resource, cls, level, ts, frozenset(ctx), frozenset(hist))


@pytest.fixture
def policy():
    return default_policy()


@pytest.fixture
def store():
    return InMemoryStore()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
