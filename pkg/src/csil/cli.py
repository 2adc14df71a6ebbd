"""Command-line entry points.

Every subcommand takes --seed and --out-dir. Artifacts are plain JSON/CSV
files with conventional names inside the out dir, so commands compose:
train-expert writes expert.json + featurizer.json, collect-demos reads them
and writes demos.json, reconstruct reads demos.json, and so on. Failures
print the failing stage to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import dqn as dqn_mod
from . import harness, sparse
from .bc import bc_sample_sweep
from .cartpole import CartPoleEnv
from .features import RBFFeaturizer, fit_featurizer, sample_state_box
from .linear_agent import QLearningConfig, WeightStack, train_linear_q
from .seeding import substream_seed

EXPERT_FILE = "expert.json"
FEATURIZER_FILE = "featurizer.json"
DEMOS_FILE = "demos.json"
DQN_FILE = "dqn_expert.json"


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage


def _load_featurizer(path) -> RBFFeaturizer:
    try:
        with open(path) as fh:
            return RBFFeaturizer.from_json(fh.read())
    except Exception as exc:
        raise StageError("load-featurizer", exc)


def _load_expert(path) -> WeightStack:
    try:
        with open(path) as fh:
            return WeightStack.from_json(fh.read())
    except Exception as exc:
        raise StageError("load-expert", exc)


def _load_demos(path):
    try:
        with open(path) as fh:
            return harness.demos_from_json(fh.read())
    except Exception as exc:
        raise StageError("load-demos", exc)


def _write(out_dir, name, text):
    harness._atomic_write(os.path.join(out_dir, name), text)
    return os.path.join(out_dir, name)


def cmd_train_expert(args):
    env = CartPoleEnv()
    feat_seed = substream_seed(args.seed, "featurizer")
    states = sample_state_box(20000, substream_seed(args.seed, "featurizer-states"))
    featurizer = fit_featurizer(states, seed=feat_seed)
    config = QLearningConfig(episodes=args.episodes, l1_shrinkage=args.shrinkage,
                             seed=args.seed)
    result = train_linear_q(env, featurizer, config, stop_reward=args.stop_reward)
    _write(args.out_dir, FEATURIZER_FILE, featurizer.to_json())
    _write(args.out_dir, EXPERT_FILE, result.weights.to_json())
    curve = "\n".join(f"{i},{r}" for i, r in enumerate(result.episode_rewards))
    _write(args.out_dir, "expert_curve.csv", "episode,reward\n" + curve + "\n")
    summary = harness.evaluate(result.weights, env, args.eval_episodes,
                               substream_seed(args.seed, "eval"), featurizer)
    print(json.dumps({"solved_at": result.solved_at, "eval_mean": summary.mean,
                      "eval_median": summary.median}))
    return 0


def cmd_train_dqn_expert(args):
    env = CartPoleEnv()
    config = dqn_mod.DqnTrainConfig(iterations=args.iterations, seed=args.seed)
    boost_pairs = None
    if args.boost_every is not None:
        if not args.demos:
            raise StageError("train-dqn-expert", "--boost-every needs --demos")
        demos, _ = _load_demos(args.demos)
        boost_pairs = [(d.state, d.action) for d in demos]
    net = dqn_mod.train_dqn(env, config, boost_every=args.boost_every,
                            boost_demos=boost_pairs)
    _write(args.out_dir, DQN_FILE, net.to_json())
    summary = harness.evaluate(net, env, args.eval_episodes,
                               substream_seed(args.seed, "eval"))
    print(json.dumps({"eval_mean": summary.mean, "eval_median": summary.median,
                      "last_layer_sparsity": dqn_mod.last_layer_sparsity(net)}))
    return 0


def cmd_collect_demos(args):
    featurizer = _load_featurizer(args.featurizer or os.path.join(args.out_dir, FEATURIZER_FILE))
    expert = _load_expert(args.expert or os.path.join(args.out_dir, EXPERT_FILE))
    env = CartPoleEnv()
    demos = harness.collect_demos(expert, env, args.count, args.mode, args.seed,
                                  featurizer, selection=args.selection)
    path = _write(args.out_dir, DEMOS_FILE,
                  harness.demos_to_json(demos, args.mode, args.seed))
    print(json.dumps({"demos": len(demos), "path": path}))
    return 0


def cmd_reconstruct(args):
    env = CartPoleEnv()
    featurizer = _load_featurizer(args.featurizer or os.path.join(args.out_dir, FEATURIZER_FILE))
    expert = None
    expert_path = args.expert or os.path.join(args.out_dir, EXPERT_FILE)
    if os.path.exists(expert_path):
        expert = _load_expert(expert_path)

    if args.level == 3:
        if expert is None:
            raise StageError("reconstruct", "level 3 needs an expert file for demos")
        pick = harness.reconstruct_level3(expert, featurizer, env, args.seed,
                                          demo_count=args.demo_count)
        boosted, student = pick["boosted"], pick["student"]
        _write(args.out_dir, "boosted.json", boosted.to_json())
        ev_b = harness.evaluate(boosted, env, args.eval_episodes,
                                substream_seed(args.seed, "eval"))
        ev_s = harness.evaluate(student, env, args.eval_episodes,
                                substream_seed(args.seed, "eval-student"))
        out = {"level": 3, "selected": {"lam": pick["lam"], "epsilon": pick["epsilon"]},
               "student_eval_mean": ev_s.mean, "boosted_eval_mean": ev_b.mean,
               "student_sparsity": dqn_mod.last_layer_sparsity(student),
               "boosted_sparsity": dqn_mod.last_layer_sparsity(boosted)}
        _write(args.out_dir, "recon_level3.json", json.dumps(out, indent=2))
        print(json.dumps(out))
        return 0

    demos, mode = _load_demos(args.demos or os.path.join(args.out_dir, DEMOS_FILE))
    if args.level == 1:
        if mode != "expose_q":
            raise StageError("reconstruct", "level 1 needs demos collected with expose_q")
        pick = harness.reconstruct_level1(demos, featurizer, env, args.seed)
        selected = {"variant": pick["variant"], "mu": pick["mu"]}
    else:
        pick = harness.reconstruct_level2(demos, featurizer, env, args.seed)
        selected = {"target_index": pick["target_index"], "lam": pick["lam"],
                    "epsilon": pick["epsilon"]}
    weights = pick["weights"]
    summary = harness.evaluate(weights, env, args.eval_episodes,
                               substream_seed(args.seed, "eval"), featurizer)
    out = {"level": args.level, "selected": selected, "eval_mean": summary.mean,
           "eval_median": summary.median,
           "sparsity": harness.sparsity_fraction(weights.stacked),
           "solver": harness._solver_summary(pick["report"])}
    if expert is not None:
        probe = harness.rollout_states(expert, env, harness.PROBE_EPISODES,
                                       substream_seed(args.seed, "probe"), featurizer)
        out["correlation_visited"] = harness.q_difference_correlation(
            expert, weights, probe, featurizer)
        out["weight_error"] = harness.weight_error(weights, expert)
    _write(args.out_dir, f"recon_level{args.level}.json", json.dumps(out, indent=2))
    _write(args.out_dir, f"recon_level{args.level}_weights.json", weights.to_json())
    print(json.dumps(out))
    return 0


def cmd_evaluate(args):
    env = CartPoleEnv()
    with open(args.agent) as fh:
        payload = json.load(fh)
    if "layer_sizes" in payload:
        agent = dqn_mod.QNetwork.from_json(json.dumps(payload))
        featurizer = None
    else:
        agent = WeightStack.from_json(json.dumps(payload))
        featurizer = _load_featurizer(args.featurizer or os.path.join(args.out_dir, FEATURIZER_FILE))
    summary = harness.evaluate(agent, env, args.episodes, args.seed, featurizer)
    print(json.dumps(summary.to_dict()))
    return 0


def cmd_bench_bc(args):
    featurizer = _load_featurizer(args.featurizer or os.path.join(args.out_dir, FEATURIZER_FILE))
    expert = _load_expert(args.expert or os.path.join(args.out_dir, EXPERT_FILE))
    env = CartPoleEnv()
    sizes = tuple(int(s) for s in args.sizes.split(","))
    csv_path = os.path.join(args.out_dir, "bc_sweep.csv")
    rows = bc_sample_sweep(env, expert, featurizer, sizes=sizes,
                           seeds=(args.seed,), eval_episodes=args.eval_episodes,
                           csv_path=csv_path)
    agg = {r["size"]: r["mean_reward"] for r in rows if r["seed"] == "all"}
    print(json.dumps({"csv": csv_path, "mean_by_size": agg}))
    return 0


def cmd_scan(args):
    lambdas = tuple(float(v) for v in args.lambdas.split(","))
    epsilons = tuple(float(v) for v in args.epsilons.split(","))
    config = harness.ExperimentConfig(level="2", demo_count=args.demo_count,
                                      seeds=(args.seed,), out_dir=args.out_dir)
    table = harness.hyperparameter_scan(config, lambdas, epsilons)
    best = max(table, key=lambda row: row["eval_mean"])
    _write(args.out_dir, "scan.json", json.dumps({"table": table, "best": best},
                                                 indent=2))
    print(json.dumps(best))
    return 0


def cmd_rip_check(args):
    if args.matrix == "features":
        feat_path = args.featurizer or os.path.join(args.out_dir, FEATURIZER_FILE)
        if os.path.exists(feat_path):
            featurizer = _load_featurizer(feat_path)
        else:
            states = sample_state_box(20000, substream_seed(args.seed, "featurizer-states"))
            featurizer = fit_featurizer(states, seed=substream_seed(args.seed, "featurizer"))
        probes = sample_state_box(args.rows, substream_seed(args.seed, "rip-rows"))
        A = featurizer.transform_batch(probes)
    else:
        rng = np.random.default_rng(args.seed)
        A = rng.normal(size=(args.rows, args.columns))
    delta, (lo, hi) = sparse.rip_diagnostic(A, k=args.k, trials=args.trials,
                                            seed=substream_seed(args.seed, "rip"))
    out = {"matrix": args.matrix, "rows": int(A.shape[0]), "columns": int(A.shape[1]),
           "k": args.k, "trials": args.trials, "delta": delta,
           "eig_low": lo, "eig_high": hi}
    _write(args.out_dir, "rip.json", json.dumps(out, indent=2))
    print(json.dumps(out))
    return 0


def cmd_report(args):
    seeds = tuple(int(s) for s in args.seeds.split(","))
    config = harness.ExperimentConfig(level=args.level, demo_count=args.demo_count,
                                      seeds=seeds, eval_episodes=args.eval_episodes,
                                      out_dir=args.out_dir)
    report = harness.run_experiment(config)
    for failure in report["failures"]:
        print(f"seed {failure['seed']} failed at {failure['stage']}: "
              f"{failure['error']}", file=sys.stderr)
    done = len(report["sections"])
    print(json.dumps({"sections": done, "failures": len(report["failures"]),
                      "out_dir": args.out_dir,
                      "aggregate": report.get("aggregate")}))
    return 0 if not report["failures"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="csil",
                                     description="compressed imitation of cart-pole experts")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out-dir", default="runs")

    p = sub.add_parser("train-expert", help="tabular-free Q-learning expert")
    common(p)
    p.add_argument("--episodes", type=int, default=10000)
    p.add_argument("--shrinkage", type=float, default=0.01)
    p.add_argument("--stop-reward", type=float, default=195.0)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.set_defaults(func=cmd_train_expert)

    p = sub.add_parser("train-dqn-expert", help="neural Q-learning expert")
    common(p)
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.add_argument("--boost-every", type=int, default=None,
                   help="re-solve the last layer from --demos this often")
    p.add_argument("--demos", help="demo file for periodic last-layer boosts")
    p.set_defaults(func=cmd_train_dqn_expert)

    p = sub.add_parser("collect-demos", help="sample demo states from the expert")
    common(p)
    p.add_argument("--expert")
    p.add_argument("--featurizer")
    p.add_argument("--count", type=int, default=21)
    p.add_argument("--mode", choices=["expose_q", "actions_only"], default="expose_q")
    p.add_argument("--selection", choices=["uniform", "spread"], default="uniform")
    p.set_defaults(func=cmd_collect_demos)

    p = sub.add_parser("reconstruct", help="recover an agent from demos")
    common(p)
    p.add_argument("--level", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--demos")
    p.add_argument("--expert")
    p.add_argument("--featurizer")
    p.add_argument("--demo-count", type=int, default=20)
    p.add_argument("--eval-episodes", type=int, default=100)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="greedy rollout statistics for an agent file")
    common(p)
    p.add_argument("--agent", required=True)
    p.add_argument("--featurizer")
    p.add_argument("--episodes", type=int, default=100)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-bc", help="behavior cloning sample-size sweep")
    common(p)
    p.add_argument("--expert")
    p.add_argument("--featurizer")
    p.add_argument("--sizes", default="10,21,50,100,200,500,1000,2000")
    p.add_argument("--eval-episodes", type=int, default=20)
    p.set_defaults(func=cmd_bench_bc)

    p = sub.add_parser("scan", help="margin/anchor grid search scored by rollouts")
    common(p)
    p.add_argument("--lambdas", default="1.0,0.1")
    p.add_argument("--epsilons", default="0.1,1.0")
    p.add_argument("--demo-count", type=int, default=21)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("rip-check", help="restricted-isometry diagnostic")
    common(p)
    p.add_argument("--matrix", choices=["features", "gaussian"], default="features")
    p.add_argument("--featurizer")
    p.add_argument("--rows", type=int, default=200)
    p.add_argument("--columns", type=int, default=1000)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--trials", type=int, default=200)
    p.set_defaults(func=cmd_rip_check)

    p = sub.add_parser("report", help="full pipeline over several seeds")
    common(p)
    p.add_argument("--level", choices=["1", "2", "3", "bc"], default="2")
    p.add_argument("--demo-count", type=int, default=21)
    p.add_argument("--seeds", default="0,1,2,3,4")
    p.add_argument("--eval-episodes", type=int, default=100)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    os.makedirs(args.out_dir, exist_ok=True)
    try:
        return args.func(args)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except Exception as exc:  # surface the stage through the command name
        print(f"stage {args.command} failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
