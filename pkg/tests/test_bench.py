import numpy as np
import pytest

from redthreads.bench import BASELINE, Config, Summary, disjoint_below, mean_ci, time_configs
from redthreads.harness import PolicyFlags


def test_mean_ci_contains_mean():
    x = np.random.default_rng(0).normal(1.0, 0.1, 200)
    s = mean_ci(x)
    assert s.low < s.mean < s.high and s.n == 200
    assert s.high - s.low < 0.06


def test_mean_ci_degenerate():
    assert mean_ci([2.0, 2.0]).to_json() == {"mean": 2.0, "ci_low": 2.0, "ci_high": 2.0, "n": 2}
    assert mean_ci([3.0]).low == 3.0


def test_disjoint():
    assert disjoint_below(Summary(1, 0.9, 1.1, 5), Summary(2, 1.2, 2.5, 5))
    assert not disjoint_below(Summary(1, 0.9, 1.3, 5), Summary(2, 1.2, 2.5, 5))


def test_time_configs_shape():
    cfgs = [Config("detect", "detect"), Config("dyn", "detect", PolicyFlags(dynamic=True), 1.0)]
    res = time_configs("spmv", cfgs, 6, size=32, warmup=1)
    assert set(res.walls) == {BASELINE, "detect", "dyn"}
    assert all(len(w) == 6 and (w > 0).all() for w in res.walls.values())
    assert res.normalized(BASELINE).mean() == pytest.approx(1.0)
    assert res.rmt_fraction["detect"] == 1.0 and res.rmt_fraction[BASELINE] == 0.0
    assert res.failures == {BASELINE: 0, "detect": 0, "dyn": 0}
    assert set(res.to_json()["configs"]) == set(res.walls)


def test_duplicate_labels():
    with pytest.raises(ValueError):
        time_configs("spmv", [Config("a"), Config("a")], 1, size=8, warmup=0)
