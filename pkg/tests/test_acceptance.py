"""The acceptance gates at full scale.

Each test prints one PASS/FAIL line, and the lines are repeated in the
terminal summary. A few gates are known to fail for reasons recorded in
the project notes (the H=1/4 limit vanishes, finite-eps bias, the variance
convention of the bracket diffusion); those tests fail rather than being
loosened. Expect a long run on one core.
"""
import pytest

from bracketlab.acceptance import GATES, AcceptanceContext


@pytest.fixture(scope="session")
def ctx():
    return AcceptanceContext()


@pytest.mark.parametrize("gate", list(GATES), ids=[f"{g}-{fn.__name__[5:]}" for g, fn in GATES.items()])
def test_gate(gate, ctx, request):
    result = GATES[gate](ctx)
    line = result.line()
    print(line)
    for row in result.checks.summary_lines():
        print("  " + row)
    request.config._gate_lines.append(line)
    assert result.passed, line
