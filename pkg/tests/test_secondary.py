import numpy as np
import pytest

from refresh.errors import ConfigError, ValidationError
from refresh.secondary import (
    ExternalScorer, FairnessScorer, RobustnessConfig, RobustnessScorer, make_scorer, rob, spd,
)
from refresh.tabular import SensitiveVault


def eight_row_vault():
    return SensitiveVault("s", np.array(["a"] * 4 + ["b"] * 4, dtype=object), "a", "b")


# group a: one of four at or above 0.5; group b: three of four
EIGHT_PROBAS = np.array([0.9, 0.1, 0.2, 0.3, 0.6, 0.7, 0.5, 0.4])


def test_spd_eight_rows():
    assert spd(EIGHT_PROBAS, eight_row_vault()) == -0.5


def test_spd_threshold_is_inclusive():
    # 0.5 counts as a positive prediction
    assert spd(EIGHT_PROBAS, eight_row_vault(), delta=0.5000001) == -0.25


def test_spd_identical_predictions_zero():
    p = np.array([0.9, 0.1, 0.6, 0.2] * 2)
    assert spd(p, eight_row_vault()) == 0.0


def test_spd_antisymmetric():
    v = eight_row_vault()
    swapped = SensitiveVault("s", v.values, "b", "a")
    assert spd(EIGHT_PROBAS, swapped) == -spd(EIGHT_PROBAS, v)


def test_spd_rows_subset():
    v = eight_row_vault()
    rows = np.array([0, 1, 4, 5])
    assert spd(EIGHT_PROBAS[rows], v, rows=rows) == 0.5 - 1.0


def test_spd_empty_group():
    v = eight_row_vault()
    with pytest.raises(ValidationError):
        spd(EIGHT_PROBAS[:4], v, rows=np.arange(4))


def test_spd_length_mismatch():
    with pytest.raises(ValidationError):
        spd(EIGHT_PROBAS[:5], eight_row_vault())


def test_rob_on_boundary():
    assert rob(np.full(5, 0.3), RobustnessConfig(0.3)) == 0.0


def test_rob_maximal():
    assert rob(np.array([0.0, 1.0])) == 0.5


def test_rob_three_rows():
    assert abs(rob(np.array([0.9, 0.1, 0.5])) - 0.8 / 3) < 1e-9


def test_rob_config_bounds():
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ConfigError):
            RobustnessConfig(bad)


def test_scorer_orientation():
    v = eight_row_vault()
    s = FairnessScorer(v)(EIGHT_PROBAS)
    assert (s.kind, s.raw, s.value) == ("fairness", -0.5, -0.5)
    s = FairnessScorer(SensitiveVault("s", v.values, "b", "a"))(EIGHT_PROBAS)
    assert (s.raw, s.value) == (0.5, -0.5)
    r = RobustnessScorer()(np.array([0.0, 1.0]))
    assert r.value == r.raw == 0.5


def test_external_scorer_and_nonfinite():
    ext = ExternalScorer(lambda p, rows: float(np.mean(p)), kind="mean")
    assert ext(np.array([0.2, 0.4])).value == pytest.approx(0.3)
    with pytest.raises(ValidationError):
        ExternalScorer(lambda p, rows: float("nan"))(np.array([0.2]))


def test_make_scorer():
    assert isinstance(make_scorer("robustness", delta=0.4), RobustnessScorer)
    with pytest.raises(ConfigError):
        make_scorer("fairness")
    with pytest.raises(ConfigError):
        make_scorer("accuracy")
