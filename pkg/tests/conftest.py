"""Shared fixtures: train each root seed's featurizer and expert once.

An expert costs roughly 15 seconds of Q-learning and all four pipeline levels
need the same five. The session cache wraps the harness factory functions with
memoizing lookups keyed by the config knobs they actually read, so every
downstream number matches an uncached run exactly; the cache also records
training wall time so the acceptance suite can report runtime with expert
training excluded.
"""

import time

import pytest

from csil import harness
from csil.harness import ExperimentConfig

ROOT_SEEDS = (0, 1, 2, 3, 4)

_REAL_MAKE_FEATURIZER = harness.make_featurizer
_REAL_TRAIN_EXPERT = harness.train_expert


def pytest_configure(config):
    config._suite_started = time.perf_counter()


def pytest_collection_modifyitems(items):
    # acceptance drives the full pipelines; run it after the unit suite
    items.sort(key=lambda item: "test_acceptance" in item.nodeid)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


class SeedCache:
    """Memoized per-root-seed featurizer and expert training."""

    def __init__(self):
        self.featurizers = {}
        self.experts = {}
        self.train_seconds = {}

    @staticmethod
    def _feat_key(config, seed):
        return (seed, tuple(config.bandwidths), config.components_per_block)

    def featurizer(self, config, seed):
        key = self._feat_key(config, seed)
        if key not in self.featurizers:
            self.featurizers[key] = _REAL_MAKE_FEATURIZER(config, seed)
        return self.featurizers[key]

    def expert(self, config, env, featurizer, seed):
        feat_key = next((k for k, v in self.featurizers.items()
                         if v is featurizer), None)
        if feat_key is None:
            # not a featurizer we handed out; do not guess
            return _REAL_TRAIN_EXPERT(config, env, featurizer, seed)
        key = feat_key + (config.expert_shrinkage,)
        if key not in self.experts:
            start = time.perf_counter()
            self.experts[key] = _REAL_TRAIN_EXPERT(config, env, featurizer,
                                                   seed)
            self.train_seconds[key] = time.perf_counter() - start
        return self.experts[key]

    def seconds_by_seed(self):
        return {key[0]: secs for key, secs in self.train_seconds.items()}

    def total_train_seconds(self):
        return float(sum(self.train_seconds.values()))


@pytest.fixture(scope="session")
def seed_cache():
    cache = SeedCache()
    patcher = pytest.MonkeyPatch()
    patcher.setattr(harness, "make_featurizer", cache.featurizer)
    patcher.setattr(harness, "train_expert", cache.expert)
    yield cache
    patcher.undo()


@pytest.fixture(scope="session")
def pipeline_reports(seed_cache, tmp_path_factory):
    """Callable: level -> run_experiment report, computed once per level."""
    reports = {}

    def get(level):
        if level not in reports:
            out = tmp_path_factory.mktemp(f"accept_level_{level}")
            config = ExperimentConfig(level=level,
                                      demo_count=20 if level == "3" else 21,
                                      seeds=ROOT_SEEDS, out_dir=str(out))
            reports[level] = harness.run_experiment(config)
        return reports[level]

    return get


@pytest.fixture(scope="session")
def criterion_recorder(request):
    lines = []
    request.config._criterion_lines = lines
    return lines


@pytest.fixture(scope="session")
def suite_started(request):
    return request.config._suite_started
