"""End-to-end smoke tests for the python bindings."""

import math

import pytest

import refprime


def test_version_and_exports():
    assert refprime.__version__
    assert callable(refprime.mock_cohort_records)


def test_temperatures_are_unique_and_bounded():
    temps = refprime.assign_temperatures(24, 0.2, 1.0, seed=7)
    assert len(temps) == 24
    assert len(set(temps)) == 24
    assert all(0.2 <= t <= 1.0 for t in temps)


def test_persona_prompt_matches_template():
    text = refprime.render_persona_prompt("Mr.", "Smith", "England", "He")
    assert text == (
        "Mr. Smith is a native English speaker living in England. "
        "He is asked in a psycholinguistic experiment to answer the following questions."
    )


def test_answer_parsing_and_coding():
    assert refprime.parse_answer("Yes.") == "yes"
    assert refprime.parse_answer(" no way") == "no"
    assert refprime.parse_answer("perhaps") == "unparseable"
    assert refprime.code_referent("yes", "subject", "e1a") == 1
    assert refprime.code_referent("yes", "nonsubject", "e1a") == 0
    assert refprime.code_referent("no", "source", "e2b") == 1


def test_template_generation_counts():
    items = refprime.generate_templates("e1a", "subject", seed=7)
    assert len(items) >= 32
    assert sum(1 for item in items if item["ambiguous"]) == 12
    assert all(item["verb_class"] == "joint" for item in items)


def test_mock_cohort_and_descriptives():
    bias = {
        "content_accuracy": 1.0,
        "subject_bias_by_exposure": {"subject": 1.0, "nonsubject": 0.0},
    }
    records = refprime.mock_cohort_records("e1a", cohort_size=4, seed=11, bias=bias)
    assert len(records) == 4 * 44
    rows = refprime.condition_proportions(records, "e1a")
    assert rows
    for row in rows:
        expected = 1.0 if row["exposure"] == "subject" else 0.0
        assert row["proportion"] == expected


def test_fit_recovers_a_strong_exposure_effect():
    bias = {
        "content_accuracy": 1.0,
        "subject_bias_by_exposure": {"subject": 0.9, "nonsubject": 0.3},
    }
    records = refprime.mock_cohort_records("e1a", cohort_size=12, seed=5, bias=bias)
    fit = refprime.fit_records(
        records, "e1a", chains=2, iterations=900, warmup=300, target_accept=0.9, seed=3
    )
    assert fit["pooled_draws"] == 2 * 600
    coefs = {row["name"]: row for row in fit["fixed_effects"]}
    assert coefs["b_PC"]["mean"] > 0.0
    assert coefs["b_PC"]["p_map"] < 0.05


def test_levene_and_pmap():
    res = refprime.levene_test([[1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.0, 10.0]], center="median")
    assert res["w"] == pytest.approx(2.49908925318761, rel=1e-10)
    assert res["p"] == pytest.approx(0.157924710985924, rel=1e-8)

    import random

    rng = random.Random(4)
    symmetric = [rng.gauss(0.0, 1.0) for _ in range(2000)]
    assert refprime.p_map(symmetric) >= 0.8
    shifted = [6.0 + rng.gauss(0.0, 1.0) for _ in range(2000)]
    assert refprime.p_map(shifted) < 1e-4


def test_canonical_model_mentions_published_codings():
    text = refprime.canonical_model("e1a")
    assert "QtypeC" in text
    assert "0.51" in text
    assert "group participant: Intercept + QtypeC (correlated)" in text


def test_rhat_on_white_noise():
    import random

    rng = random.Random(9)
    chains = [[rng.gauss(0.0, 1.0) for _ in range(1500)] for _ in range(4)]
    rhat, ess = refprime.rhat_and_ess(chains)
    assert 0.99 <= rhat <= 1.01
    assert ess > 1000
    assert not math.isnan(ess)
