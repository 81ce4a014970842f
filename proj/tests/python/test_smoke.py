import json
import math

import pytest

import tap


def test_chain_round_trip():
    steps = tap.parse_chain("add the numbers\n\n  state   total ")
    assert steps == [["add", "the", "numbers"], ["state", "total"]]
    assert tap.render_chain(steps) == "add the numbers\nstate total"
    assert tap.parse_chain(tap.render_chain(steps, " | "), " | ") == steps


def test_bad_delimiter_raises_domain_error():
    with pytest.raises(tap.DomainError):
        tap.parse_chain("a b", "")
    assert issubclass(tap.DomainError, tap.TapError)


def test_similarities():
    assert tap.token_f1(["a", "b"], ["a", "b"]) == 1.0
    assert tap.token_f1([], ["a"]) == 0.0
    # one shared token out of two on each side
    assert tap.token_f1(["a", "x"], ["a", "y"]) == pytest.approx(0.5)
    assert tap.normalized_levenshtein(["a", "b", "c"], ["a", "c"]) == pytest.approx(2 / 3)


def test_softmax():
    p = tap.softmax([1.0, 2.0, 3.0], 0.5)
    z = sum(math.exp(v / 0.5) for v in (1.0, 2.0, 3.0))
    assert p == pytest.approx([math.exp(v / 0.5) / z for v in (1.0, 2.0, 3.0)], rel=1e-12)
    assert sum(p) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(tap.DomainError):
        tap.softmax([1.0], 0.0)


def test_synthetic_tasks_and_reward():
    tasks = tap.generate_tasks(3, seed=5)
    assert len(tasks) == 3
    assert tasks == tap.generate_tasks(3, seed=5)
    t = tasks[0]
    assert tap.synthetic_reward(t, t["target_chain"]) == 1.0
    r0 = tap.synthetic_reward(t, t["initial_chain"])
    assert 0.0 <= r0 < 1.0
    with pytest.raises(tap.ConfigError):
        tap.synthetic_reward(t, t["initial_chain"], "bleu")


def test_simulation_lemma_holds():
    report = tap.simulation_lemma(trials=20, seed=1)
    assert report["satisfied"] == 20
    assert len(report["trials"]) == 20


def test_cli_in_process(tmp_path):
    code, out, err = tap.run_cli("validate", "--suite", "simlemma", "--trials", "5",
                                 "--out-dir", tmp_path)
    assert code == tap.EXIT_OK, err
    assert "5/5" in out
    assert json.loads((tmp_path / "simlemma.json").read_text())["satisfied"] == 5
    code, _, _ = tap.run_cli("validate", "--suite", "bogus")
    assert code == tap.EXIT_CONFIG
