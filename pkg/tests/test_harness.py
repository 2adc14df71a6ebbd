import json

import numpy as np
import pytest

from csil import harness
from csil.bc import BcModel
from csil.cartpole import CartPoleEnv
from csil.features import fit_featurizer, sample_state_box
from csil.harness import (Demonstration, ExperimentConfig, collect_demos,
                          demos_from_json, demos_to_json, evaluate,
                          q_difference_correlation, weight_error)
from csil.linear_agent import (QLearningConfig, WeightStack, greedy_action,
                               q_values, train_linear_q)
from csil.seeding import substream, substream_seed


@pytest.fixture(scope="module")
def small_feat():
    return fit_featurizer(sample_state_box(400, 3), seed=9,
                          components_per_block=8)


@pytest.fixture(scope="module")
def expert0(seed_cache):
    config = ExperimentConfig(level="1")
    featurizer = harness.make_featurizer(config, 0)
    result = harness.train_expert(config, CartPoleEnv(), featurizer, 0)
    return featurizer, result.weights


def _tiny_expert(config, env, featurizer, seed):
    # 40 episodes is enough weight structure to exercise the plumbing
    qconf = QLearningConfig(episodes=40, l1_shrinkage=config.expert_shrinkage,
                            seed=seed)
    return train_linear_q(env, featurizer, qconf)


def test_seed_substreams_are_stable_and_distinct():
    assert substream_seed(0, "demos") == substream_seed(0, "demos")
    assert substream_seed(0, "demos") != substream_seed(0, "eval")
    assert substream_seed(0, "demos") != substream_seed(1, "demos")
    a = substream(3, "x").integers(2**31, size=4)
    b = substream(3, "x").integers(2**31, size=4)
    np.testing.assert_array_equal(a, b)


def test_collect_demos_modes(expert0):
    featurizer, expert = expert0
    env = CartPoleEnv()
    with_q = collect_demos(expert, env, 12, "expose_q", 5, featurizer)
    assert len(with_q) == 12
    for d in with_q:
        assert d.q_values is not None
        np.testing.assert_array_equal(
            d.q_values, q_values(expert, featurizer.transform(d.state)))
        assert d.action == greedy_action(expert, featurizer.transform(d.state))
    bare = collect_demos(expert, env, 12, "actions_only", 5, featurizer)
    assert all(d.q_values is None for d in bare)
    states = np.array([d.state for d in with_q])
    assert len(np.unique(states, axis=0)) == 12


def test_collect_demos_deterministic(expert0):
    featurizer, expert = expert0
    env = CartPoleEnv()
    a = collect_demos(expert, env, 8, "expose_q", 11, featurizer)
    b = collect_demos(expert, env, 8, "expose_q", 11, featurizer)
    assert demos_to_json(a, "expose_q", 11) == demos_to_json(b, "expose_q", 11)
    c = collect_demos(expert, env, 8, "expose_q", 12, featurizer)
    assert demos_to_json(a, "expose_q", 11) != demos_to_json(c, "expose_q", 12)


def test_collect_demos_validation(expert0):
    featurizer, expert = expert0
    env = CartPoleEnv()
    with pytest.raises(ValueError):
        collect_demos(expert, env, 4, "verbose", 0, featurizer)
    with pytest.raises(ValueError):
        collect_demos(expert, env, 4, "expose_q", 0, featurizer,
                      selection="stratified")


def test_collect_demos_tops_up_small_pools(small_feat):
    expert = WeightStack.from_stacked(np.zeros(2 * small_feat.dim))
    env = CartPoleEnv()
    demos = collect_demos(expert, env, 15, "actions_only", 7, small_feat,
                          pool_episodes=1)
    states = np.array([d.state for d in demos])
    assert len(np.unique(states, axis=0)) == 15


def test_demos_json_roundtrip():
    demos = [Demonstration(state=np.array([0.1, 0.2, 0.3, 0.4]), action=1,
                           q_values=np.array([0.5, 0.7])),
             Demonstration(state=np.array([-0.1, 0.0, 0.0, 0.0]), action=0)]
    text = demos_to_json(demos, "expose_q", 3)
    back, mode = demos_from_json(text)
    assert mode == "expose_q"
    np.testing.assert_array_equal(back[0].state, demos[0].state)
    np.testing.assert_array_equal(back[0].q_values, demos[0].q_values)
    assert back[1].q_values is None and back[1].action == 0


def test_spread_select_covers_outliers():
    rng = np.random.default_rng(0)
    cluster = rng.normal(0.0, 0.05, size=(100, 4))
    outliers = np.array([[10.0, 10.0, 10.0, 10.0],
                         [-10.0, -10.0, -10.0, -10.0],
                         [10.0, -10.0, 10.0, -10.0]])
    pool = np.vstack([cluster, outliers])
    picked = harness.spread_select(pool, 4, seed=1)
    picked_set = {tuple(p) for p in picked}
    for o in outliers:
        assert tuple(o) in picked_set


def test_spread_select_rejects_small_pool():
    with pytest.raises(ValueError):
        harness.spread_select(np.zeros((3, 4)), 5, seed=0)


def test_evaluate_constant_policy():
    env = CartPoleEnv()
    summary = evaluate(lambda s: 0, env, 20, seed=3)
    assert summary.mean < 50.0  # pushing one way drops the pole fast
    assert all(1.0 <= r <= 200.0 for r in summary.rewards)
    assert sum(c for _, _, c in summary.histogram) == 20
    assert summary.median == float(np.median(summary.rewards))
    assert summary.histogram[0][0] == 0.0 and summary.histogram[-1][1] == 200.0


def test_evaluate_deterministic():
    env = CartPoleEnv()
    a = evaluate(lambda s: int(s[2] > 0), env, 10, seed=5)
    b = evaluate(lambda s: int(s[2] > 0), env, 10, seed=5)
    np.testing.assert_array_equal(a.rewards, b.rewards)


def test_as_policy_adapters(small_feat):
    fn = lambda s: 1
    assert harness.as_policy(fn) is fn
    ws = WeightStack.from_stacked(np.arange(2 * small_feat.dim, dtype=float))
    with pytest.raises(ValueError):
        harness.as_policy(ws)
    act = harness.as_policy(ws, small_feat)
    s = np.array([0.01, 0.0, 0.02, 0.0])
    assert act(s) == greedy_action(ws, small_feat.transform(s))
    with pytest.raises(ValueError):
        harness.as_policy(BcModel(weights=np.zeros((2, 4)),
                                  biases=np.zeros(2)))
    with pytest.raises(TypeError):
        harness.as_policy(object())


def test_q_correlation_identity_scale_swap(small_feat):
    rng = np.random.default_rng(4)
    expert = WeightStack.from_stacked(rng.normal(size=2 * small_feat.dim))
    states = rng.uniform(-1, 1, size=(40, 4))
    same = q_difference_correlation(expert, expert, states, small_feat)
    assert same["r"] == pytest.approx(1.0) and same["agreement"] == 1.0
    scaled = WeightStack.from_stacked(0.5 * expert.stacked)
    assert q_difference_correlation(expert, scaled, states,
                                    small_feat)["r"] == pytest.approx(1.0)
    swapped = WeightStack(w0=expert.w1, w1=expert.w0)
    flipped = q_difference_correlation(expert, swapped, states, small_feat)
    assert flipped["r"] == pytest.approx(-1.0)
    assert flipped["agreement"] == 0.0


def test_q_correlation_edge_cases(small_feat):
    rng = np.random.default_rng(5)
    expert = WeightStack.from_stacked(rng.normal(size=2 * small_feat.dim))
    with pytest.raises(ValueError):
        q_difference_correlation(expert, expert, rng.uniform(size=(2, 4)),
                                 small_feat)
    zero = WeightStack.from_stacked(np.zeros(2 * small_feat.dim))
    out = q_difference_correlation(expert, zero, rng.uniform(size=(10, 4)),
                                   small_feat)
    assert out["r"] is None and 0.0 <= out["agreement"] <= 1.0
    with pytest.raises(TypeError):
        q_difference_correlation(expert, object(), rng.uniform(size=(10, 4)),
                                 small_feat)


def test_weight_error_cases():
    ones = WeightStack.from_stacked(np.ones(10))
    assert weight_error(ones, ones) == {"mean_abs_error": 0.0,
                                        "relative_error": 0.0}
    close = WeightStack.from_stacked(np.full(10, 0.9))
    out = weight_error(close, ones)
    assert out["mean_abs_error"] == pytest.approx(0.1)
    assert out["relative_error"] == pytest.approx(0.1)
    zero = WeightStack.from_stacked(np.zeros(10))
    assert weight_error(zero, ones)["relative_error"] == pytest.approx(1.0)
    assert weight_error(ones, zero)["relative_error"] == float("inf")
    with pytest.raises(ValueError):
        weight_error(WeightStack.from_stacked(np.ones(8)), ones)


def test_sparsity_fraction():
    x = np.array([1.0, 1e-5, 0.0, 0.5])
    assert harness.sparsity_fraction(x) == 0.5
    assert harness.sparsity_fraction(np.zeros(4)) == 1.0
    assert harness.sparsity_fraction(np.ones(4)) == 0.0


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        ExperimentConfig(level="4")
    with pytest.raises(ValueError):
        ExperimentConfig(demo_count=0)
    with pytest.raises(ValueError):
        ExperimentConfig(seeds=())
    config = ExperimentConfig(level="3", demo_count=20, seeds=(7,))
    assert ExperimentConfig.from_dict(config.to_dict()) == config


def _shrink_level2(monkeypatch):
    monkeypatch.setattr(harness, "train_expert", _tiny_expert)
    monkeypatch.setattr(harness, "LEVEL2_TARGET_COUNT", 2)
    monkeypatch.setattr(harness, "LEVEL2_LAMBDA_GRID", (1.0,))
    monkeypatch.setattr(harness, "LEVEL2_EPSILON_GRID", (0.1,))


def test_run_experiment_reruns_identically(monkeypatch, tmp_path):
    _shrink_level2(monkeypatch)
    base = dict(level="2", demo_count=5, seeds=(0, 1), eval_episodes=3,
                select_episodes=2)
    r1 = harness.run_experiment(ExperimentConfig(out_dir=str(tmp_path / "a"),
                                                 **base))
    r2 = harness.run_experiment(ExperimentConfig(out_dir=str(tmp_path / "b"),
                                                 **base))
    for key in ("sections", "failures", "csv_files", "aggregate"):
        assert json.dumps(r1.get(key), sort_keys=True) == \
            json.dumps(r2.get(key), sort_keys=True)
    assert r1["config"]["seeds"] == [0, 1]
    assert r1["config"]["level"] == "2"
    for name in r1["csv_files"]:
        assert (tmp_path / "a" / name).read_bytes() == \
            (tmp_path / "b" / name).read_bytes()
    on_disk = json.loads((tmp_path / "a" / "report.json").read_text())
    assert on_disk["sections"] == json.loads(json.dumps(r1["sections"]))


def test_run_experiment_records_stage_failures(monkeypatch, tmp_path):
    monkeypatch.setattr(harness, "train_expert", _tiny_expert)

    def collect_demos(*args, **kwargs):
        raise RuntimeError("demo pool exploded")

    monkeypatch.setattr(harness, "collect_demos", collect_demos)
    report = harness.run_experiment(ExperimentConfig(
        level="2", seeds=(0,), out_dir=str(tmp_path), eval_episodes=2,
        select_episodes=2))
    assert report["sections"] == []
    assert report["failures"] == [{"seed": 0, "stage": "collect_demos",
                                   "error": "demo pool exploded"}]
    assert (tmp_path / "report.json").exists()


def test_run_experiment_level2_section_shape(monkeypatch, tmp_path):
    _shrink_level2(monkeypatch)
    report = harness.run_experiment(ExperimentConfig(
        level="2", demo_count=5, seeds=(0,), eval_episodes=3,
        select_episodes=2, out_dir=str(tmp_path)))
    assert report["failures"] == []
    section = report["sections"][0]
    for key in ("eval", "correlation_visited", "correlation_box",
                "weight_error", "sparsity", "solver", "selected"):
        assert key in section
    assert not any(k.startswith("_") for k in section)
    assert (tmp_path / "reward_histogram_seed0.csv").exists()
    assert (tmp_path / "q_scatter_seed0.csv").exists()
    assert (tmp_path / "weight_bars_seed0.csv").exists()
    assert report["aggregate"]["median_eval_median"] == \
        section["eval"]["median"]


def test_hyperparameter_scan_grid(monkeypatch):
    monkeypatch.setattr(harness, "train_expert", _tiny_expert)
    config = ExperimentConfig(level="2", demo_count=4, seeds=(0,),
                              select_episodes=2)
    table = harness.hyperparameter_scan(config, (1.0, 0.1), (0.5,))
    assert [row["lam"] for row in table] == [1.0, 0.1]
    assert all(set(row) == {"lam", "epsilon", "eval_mean"} for row in table)
    single = harness.hyperparameter_scan(config, (1.0,), (0.5,))
    assert len(single) == 1
    assert single[0] == table[0]
    with pytest.raises(ValueError):
        harness.hyperparameter_scan(config, (), (0.5,))
