import json

import numpy as np
import pytest

from sepguard import detect, fit, load_csv
from sepguard.families import POISSON
from sepguard.lp import gamma_existence_check, reduced_lp_detect
from sepguard.simulate import PATTERNS, simulate, write_simulated


@pytest.mark.parametrize("pattern", ["dense-only", "fe-only", "mixed", "overlap"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rectifier_recovers_truth(pattern, seed):
    sim = simulate(pattern, n=120, seed=seed)
    rep = detect(sim.to_dataset())
    assert rep.separated.tolist() == sim.separated.tolist()


def test_gamma_pattern():
    sim = simulate("gamma-sum-negative", n=80, seed=3)
    ds = sim.to_dataset()
    assert detect(ds).separated.size == 0
    v = gamma_existence_check(ds)
    assert not v.exists and v.reason == "gamma_sum_negative"
    assert not sim.gamma_exists


def test_fe_only_is_reduced_lp_blind_spot():
    sim = simulate("fe-only", n=100, seed=5)
    ds = sim.to_dataset()
    assert reduced_lp_detect(ds, POISSON).separated.size == 0
    assert detect(ds).separated.size == sim.separated.size > 0


def test_deterministic():
    a = simulate("mixed", n=60, seed=11)
    b = simulate("mixed", n=60, seed=11)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.X, b.X)


def test_bad_arguments():
    with pytest.raises(ValueError):
        simulate("spiral")
    with pytest.raises(ValueError):
        simulate("overlap", n=10)
    with pytest.raises(ValueError):
        simulate("fe-only", n_factors=0)


def test_write_round_trip(tmp_path):
    sim = simulate("dense-only", n=50, seed=4)
    path = tmp_path / "d.csv"
    side = write_simulated(sim, path)
    truth = json.loads(side.read_text())
    assert truth["separated_indices"] == [int(i) + 1 for i in sim.separated]
    ds = load_csv(path, "y", list(sim.column_names))
    assert np.array_equal(ds.y, sim.y)
    res = fit(ds, POISSON)
    assert res.dropped.tolist() == sim.separated.tolist()


def test_patterns_listed():
    assert set(PATTERNS) == {"dense-only", "fe-only", "mixed", "overlap", "gamma-sum-negative"}
