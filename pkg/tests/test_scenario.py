import json

import numpy as np
import pytest

from varexp_risk.scenario import (SCENARIO_DIR_ENV, ScenarioError, fixture_names, load_scenario, loads_scenario,
                                  parse_scenario, resolve_scenario)

MINIMAL = {
    "schema": 1,
    "dimension": 1,
    "outcomes": [{"label": "w", "probability": 1.0}],
    "utilities": {"entropic": {"family": "exponential", "gamma": 1.0}},
}


def test_minimal_document_loads():
    doc = parse_scenario(MINIMAL)
    assert doc.space().n == 1 and doc.space().horizon == 0
    assert doc.utility().weight == (1.0,)
    assert len(doc.exponent_function()) == 1


def test_shipped_fixtures():
    assert {"minimal", "constant", "two_point", "tree4", "vector2"} <= set(fixture_names())
    tree = load_scenario("tree4", strict=True)
    assert tree.space().horizon == 2
    assert [len(level) for level in tree.filtration] == [1, 2, 4]


@pytest.mark.parametrize("name", fixture_names())
def test_round_trip_identity(name):
    doc = load_scenario(name, strict=True)
    again = loads_scenario(doc.dumps(), strict=True)
    assert again == doc
    assert again.dumps() == doc.dumps()


def _mutate(**changes):
    raw = json.loads(json.dumps(MINIMAL))
    raw["outcomes"] = [{"label": "a", "probability": 0.5}, {"label": "b", "probability": 0.48}]
    raw.update(changes)
    return raw


def test_weights_sum_diagnostic():
    with pytest.raises(ScenarioError, match="outcomes: weights sum to 0.98"):
        parse_scenario(_mutate())


@pytest.mark.parametrize("changes,where", [
    (dict(outcomes=[{"label": "a", "probability": 1.0}], exponent=[1.0]), "exponent"),
    (dict(outcomes=[{"label": "a", "probability": 0.5}, {"label": "b", "probability": 0.5}],
          filtration=[[["a", "b"]], [["a"], ["b"]], [["a", "b"]]]), "filtration"),
    (dict(outcomes=[{"label": "a", "probability": 0.5}, {"label": "b", "probability": 0.5}],
          filtration=[[["a", "c"]]]), "filtration[0][0]"),
    (dict(outcomes=[{"label": "a", "probability": 1.0}],
          utilities={"u": {"family": "cvar", "alpha": 0.5, "weight": [2.0]}}), "utilities.u"),
    (dict(outcomes=[{"label": "a", "probability": 1.0}], payoffs={"f": [[1.0, 2.0]]}), "payoffs.f"),
    (dict(outcomes=[{"label": "a", "probability": 1.0}], schema=2), "schema"),
    (dict(outcomes=[{"label": "a", "probability": 1.0}], numeraire=[-1.0]), "numeraire"),
])
def test_invariant_violations_name_location(changes, where):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(_mutate(**changes))
    assert exc.value.where == where


def test_strict_mode_rejects_unknown_fields():
    raw = dict(MINIMAL, comment="hello")
    assert parse_scenario(raw).dimension == 1
    with pytest.raises(ScenarioError, match="unknown field"):
        parse_scenario(raw, strict=True)


def test_parse_error_location(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n "dimension": }')
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(bad)


def test_named_lookups():
    doc = load_scenario("two_point")
    np.testing.assert_array_equal(doc.payoff("f"), [[0.0], [1.0]])
    with pytest.raises(ScenarioError, match="several"):
        doc.utility()
    with pytest.raises(ScenarioError, match="not defined"):
        doc.payoff("missing")


def test_scenario_directory_from_environment(tmp_path, monkeypatch):
    (tmp_path / "mine.json").write_text(json.dumps(MINIMAL))
    monkeypatch.setenv(SCENARIO_DIR_ENV, str(tmp_path))
    assert resolve_scenario("mine") == tmp_path / "mine.json"
    assert load_scenario("mine").dimension == 1
    with pytest.raises(ScenarioError, match="not found"):
        resolve_scenario("absent")
