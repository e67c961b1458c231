import pytest

from bracketlab.oracles import run_oracles


@pytest.fixture(scope="module")
def table():
    return run_oracles(include_mc=False)


def _rows(table, prefix):
    return [r for r in table.gated if r.quantity.startswith(prefix)]


def test_every_gated_row_has_provenance(table):
    assert table.gated
    assert all(r.provenance in ("DERIVED", "PAPER", "TRIVIAL") for r in table.gated)


@pytest.mark.parametrize("prefix", [
    "linear extensions of the N poset",
    "mean of the lowest of a 3-chain",
    "int_{-3eps}^{3eps} K_eps",
    "c(H=0.1) vs matching closed candidate",
    "2-vertex J_eps",
    "2-cycle diagram",
    "index-matching pairings of X12 X12",
    "lim E X1212",
    "Var xi_eps(t)",
    "Chen composition vs direct signature",
    "Heisenberg [V1,V2]",
    "Heisenberg z(1) vs Levy area per sample",
    "Heisenberg level-4 step vs bracket step",
])
def test_oracle_agrees(table, prefix):
    rows = _rows(table, prefix)
    assert rows, prefix
    for r in rows:
        assert r.passed, r


def test_kernel_tail_matches_closed_form_only_far_out(table):
    rows = _rows(table, "K_eps beyond the mollifier support")
    near = [r for r in rows if r.params["t/eps"] <= 3]
    far = [r for r in rows if r.params["t/eps"] >= 100]
    assert near and far
    # at a few mollifier widths the power law has not set in yet
    assert not any(r.passed for r in near)
    assert all(r.passed for r in far)
