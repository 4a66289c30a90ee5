

import pytest

from relayqkd.source import (
    SourceModel,
    UndefinedStatisticError,
    leak_ratio_from_g2,
    predicted_hbt_g2,
    simulate_hbt,
    split_intensity,
)


def test_leak_ratio_pure_source():
    assert leak_ratio_from_g2(0.0) == 0.0


def test_leak_ratio_values():
    assert leak_ratio_from_g2(0.0015) == pytest.approx(7.51127e-4, rel=1e-5)
    # 0.5*0.002/0.998
    assert leak_ratio_from_g2(0.002) == pytest.approx(1.002004e-3, rel=1e-6)


def test_leak_ratio_rejects_g2_of_one():
    with pytest.raises(ValueError):
        leak_ratio_from_g2(1.0)


def test_split_intensity_values():
    m = split_intensity(0.05338, 0.0015)
    assert m.t_emit == pytest.approx(0.053340, abs=5e-7)
    assert m.nu_leak == pytest.approx(4.006e-5, rel=1e-3)
    assert m.t_emit + m.nu_leak == pytest.approx(m.intensity_total, abs=1e-15)


def test_split_intensity_degenerate_cases():
    assert split_intensity(0.0, 0.005).t_emit == 0.0
    m = split_intensity(0.04, 0.0)
    assert (m.t_emit, m.nu_leak) == (0.04, 0.0)


def test_leak_monotone_in_g2():
    leaks = [split_intensity(0.05, g2).nu_leak for g2 in (0.0, 0.001, 0.005, 0.01)]
    assert leaks == sorted(leaks)
    assert leaks[0] < leaks[-1]


def test_hbt_prediction_trivial():
    assert predicted_hbt_g2(SourceModel.ideal(0.5)) == 0.0


def test_hbt_prediction_equal_components():
    m = SourceModel(0.2, 0.5, 0.1, 0.1)
    assert predicted_hbt_g2(m) == pytest.approx(0.75)


def test_hbt_round_trip():
    for g2 in (0.0005, 0.0015, 0.005, 0.01):
        m = split_intensity(0.05, g2)
        assert predicted_hbt_g2(m) == pytest.approx(g2, abs=1e-4)


def test_hbt_rejects_empty_source():
    with pytest.raises(UndefinedStatisticError):
        predicted_hbt_g2(SourceModel(0.0, 0.1, 0.0, 0.0))


def test_simulated_hbt_recovers_g2():
    # coincidences land at ~1e-6 per window; 2e7 windows give ~20 of them
    m = split_intensity(0.05338, 0.0015)
    g2, sigma = simulate_hbt(m, n_windows=20_000_000, seed=11)
    assert abs(g2 - 0.0015) < 3.0 * sigma


def test_source_model_invariant_enforced():
    with pytest.raises(ValueError):
        SourceModel(0.05, 0.001, 0.01, 0.01)
