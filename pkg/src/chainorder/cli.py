"""Command-line surface: gen, train, order, eval, propagate, oneshot, gradcheck.

All randomness flows from the --seed flag through named derived streams, so
any subcommand rerun with the same inputs and seed produces byte-identical
output files and stdout. Wall-clock diagnostics go to stderr only.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import datagen
from .data import (DataFormatError, Dataset, read_dataset_csv, read_order,
                   read_truth, write_dataset_csv, write_order, write_truth)
from .evaluation import evaluate_order, nn_order, propagate
from .oneshot import build_episode, classify
from .ordering import (EuclideanScorer, ModelScorer, brute_force_order,
                       greedy_order, greedy_order_sampled,
                       sequence_log_likelihood)
from .seeding import derive_rng
from .training import TrainConfig, load_model, save_model, train
from .transition import GatedTransitionNet, log_transition_grad
from .nn import grad_check

GRADCHECK_MAX_DIM = 8
GRADCHECK_TOLERANCE = 1e-4


class ConfigError(ValueError):
    """A config file is missing or holds an invalid field."""


def load_config(path) -> dict:
    """Parse a flat `key = value` document; '#' starts a comment."""
    cfg = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        cfg[key.strip()] = val.strip()
    return cfg


def _cfg_get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required config field {key}")
    return default


def _cfg_int(cfg, key, default=None, required=False):
    raw = _cfg_get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _cfg_float(cfg, key, default=None, required=False):
    raw = _cfg_get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _cfg_floats(cfg, key, default=None, required=False):
    raw = _cfg_get(cfg, key, default=None, required=required)
    if raw is None:
        return default
    try:
        return [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None


def _cfg_bool(cfg, key, default):
    raw = _cfg_get(cfg, key)
    if raw is None:
        return default
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _generate(cfg, seed) -> tuple[datagen.LabeledTrajectory, int]:
    kind = _cfg_get(cfg, "gen.kind", required=True)
    n = _cfg_int(cfg, "gen.n", required=True)
    rng = derive_rng(seed, "gen")
    if kind == "rotation":
        radius = _cfg_float(cfg, "gen.radius", 1.0)
        step = _cfg_float(cfg, "gen.angular_step", 2.0 * np.pi / n)
        noise = _cfg_float(cfg, "gen.noise_sd", 0.0)
        traj = datagen.gen_rotation_chain(n, radius, step, noise, rng)
    elif kind == "linear":
        angle = _cfg_float(cfg, "gen.angle", required=True)
        decay = _cfg_float(cfg, "gen.decay", required=True)
        x0 = _cfg_floats(cfg, "gen.x0", [1.0, 0.0])
        noise = _cfg_float(cfg, "gen.noise_sd", 0.0)
        if len(x0) != 2:
            raise ConfigError("gen.x0: linear generator is 2-D, give two numbers")
        A = decay * datagen.rotation_matrix(angle)
        traj = datagen.gen_linear_dynamics(n, A, np.array(x0), noise, rng)
        scale = _cfg_floats(cfg, "gen.scale")
        if scale is not None:
            if len(scale) != traj.states.shape[1]:
                raise ConfigError("gen.scale: one factor per state dimension")
            traj = datagen.LabeledTrajectory(traj.states * np.asarray(scale),
                                             traj.kind, traj.generator, traj.params)
    elif kind == "bitflip":
        p = _cfg_int(cfg, "gen.p", required=True)
        flip = _cfg_float(cfg, "gen.flip_prob", required=True)
        traj = datagen.gen_bitflip_chain(n, p, flip, rng)
    else:
        raise ConfigError(f"gen.kind: unknown generator {kind!r}")
    traj.seed = seed
    return traj


def cmd_gen(args) -> int:
    cfg = load_config(args.config)
    traj = _generate(cfg, args.seed)
    if _cfg_bool(cfg, "gen.shuffle", True):
        dataset, truth = datagen.shuffle_with_truth(traj, derive_rng(args.seed, "shuffle"))
    else:
        dataset, truth = datagen.shuffle_with_permutation(traj, np.arange(traj.n))
    write_dataset_csv(args.out, dataset)
    truth_path = args.truth_out or (args.out + ".truth")
    write_truth(truth_path, truth)
    print(f"wrote {dataset.n} instances (dim {dataset.dim}, {dataset.kind}) "
          f"to {args.out}; truth to {truth_path}")
    return 0


def _train_config(cfg, n_data, seed) -> TrainConfig:
    hidden_raw = _cfg_get(cfg, "train.hidden_sizes", "32")
    try:
        hidden = tuple(int(x) for x in hidden_raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"train.hidden_sizes: expected comma-separated ints, got {hidden_raw!r}") from None
    starts_raw = _cfg_get(cfg, "train.num_starts", "full")
    if starts_raw == "full":
        num_starts = None
    else:
        try:
            num_starts = int(starts_raw)
        except ValueError:
            raise ConfigError(f"train.num_starts: expected 'full' or an int, got {starts_raw!r}") from None
    return TrainConfig(
        batch_size=_cfg_int(cfg, "train.batch_size", n_data),
        total_steps=_cfg_int(cfg, "train.total_steps", required=True),
        overlap=_cfg_int(cfg, "train.overlap", 0),
        refresh_period=_cfg_int(cfg, "train.refresh_period", 1),
        num_starts=num_starts,
        hidden_sizes=hidden,
        lr=_cfg_float(cfg, "train.lr", 0.001),
        dropout_rate=_cfg_float(cfg, "train.dropout_rate", 0.2),
        seed=seed,
    )


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    dataset = read_dataset_csv(args.data)
    config = _train_config(cfg, dataset.n, args.seed)
    net, history = train(dataset, config)
    save_model(net, args.out)
    history_path = args.history or (args.out + ".history.csv")
    with open(history_path, "w", encoding="utf-8") as fh:
        fh.write("step,log_likelihood,grad_norm\n")
        for s, ll, g in zip(history.steps, history.log_likelihoods, history.grad_norms):
            fh.write(f"{s},{repr(ll)},{repr(g)}\n")
    print(f"trained {config.total_steps} steps; model -> {args.out}, "
          f"history -> {history_path}")
    return 0


def cmd_order(args) -> int:
    net = load_model(args.model)
    dataset = read_dataset_csv(args.data)
    if dataset.kind != net.kind:
        raise ValueError(f"dataset kind {dataset.kind} does not match model kind {net.kind}")
    scorer = ModelScorer(net, dataset.values)
    if args.mode == "full":
        perm = greedy_order(scorer)
    elif args.mode == "sampled":
        if args.num_starts is None:
            raise ValueError("sampled mode needs --num-starts")
        perm = greedy_order_sampled(scorer, args.num_starts, derive_rng(args.seed, "starts"))
    else:
        perm = brute_force_order(scorer)
    ll = sequence_log_likelihood(scorer, perm) if scorer.n >= 2 else 0.0
    write_order(args.out, perm, ll)
    print(f"recovered order of {scorer.n} instances -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    order, _ = read_order(args.order)
    truth = read_truth(args.truth)
    if len(order) != len(truth):
        raise ValueError(f"order has {len(order)} entries, truth has {len(truth)}")
    dataset = Dataset(np.zeros((len(truth), 1)), "continuous", true_order=truth)
    rows = [evaluate_order(dataset, order, method=args.method)]
    if args.data:
        data = read_dataset_csv(args.data)
        if data.n != len(truth):
            raise ValueError(f"dataset has {data.n} rows, truth has {len(truth)}")
        rows.append(evaluate_order(dataset, nn_order(data.values), method="nn"))
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("dataset,method,seed,tau_forward,tau_reverse,tau_best\n")
        for rep in rows:
            fh.write(f"{args.label},{rep.method},{args.seed},"
                     f"{repr(rep.tau_forward)},{repr(rep.tau_reverse)},{repr(rep.tau_best)}\n")
    for rep in rows:
        print(f"{rep.method}: tau_forward={rep.tau_forward:+.4f} "
              f"tau_reverse={rep.tau_reverse:+.4f} tau_best={rep.tau_best:+.4f}")
    print(f"eval finished in {(time.perf_counter() - t0) * 1e3:.1f} ms", file=sys.stderr)
    return 0


def cmd_propagate(args) -> int:
    net = load_model(args.model)
    dataset = read_dataset_csv(args.data)
    if dataset.kind != net.kind:
        raise ValueError(f"dataset kind {dataset.kind} does not match model kind {net.kind}")
    if not 0 <= args.start < dataset.n:
        raise ValueError(f"start index {args.start} out of range for n={dataset.n}")
    for label, scorer in (("model", ModelScorer(net, dataset.values)),
                          ("euclidean", EuclideanScorer(dataset.values))):
        seq, truncated = propagate(scorer, args.start, args.steps, revisit=args.revisit)
        suffix = " (truncated)" if truncated else ""
        print(f"{label}: " + " ".join(str(i) for i in seq) + suffix)
    return 0


def cmd_oneshot(args) -> int:
    net = load_model(args.model)
    class_sets = []
    for path in args.data:
        ds = read_dataset_csv(path)
        if ds.kind != net.kind or ds.dim != net.state_dim:
            raise ValueError(f"{path}: class data does not match the model")
        class_sets.append(ds)
    if args.way > len(class_sets):
        raise ValueError(f"way={args.way} but only {len(class_sets)} class files given")
    accuracies = []
    detail_rows = []
    summary_rows = []
    for ep in range(args.episodes):
        rng = derive_rng(args.seed, f"episode:{ep}")
        episode = build_episode(class_sets, args.way, args.queries_per_class,
                                args.k, rng)
        result = classify(net, episode, rng)
        n_queries = len(episode.query_values)
        acc = result.accuracy
        summary_rows.append((ep, acc, n_queries))
        if acc is not None:
            accuracies.append(acc)
        for q in range(n_queries):
            lls = ",".join(repr(x) for x in result.class_log_likelihoods[q])
            detail_rows.append(
                f"{ep},{args.seed},{q},{episode.query_labels[q]},{result.predictions[q]},{lls}")
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("episode,seed,accuracy,n_queries\n")
        for ep, acc, nq in summary_rows:
            fh.write(f"{ep},{args.seed},{'' if acc is None else repr(acc)},{nq}\n")
    if args.details:
        header = "episode,seed,query,true_class,prediction," + ",".join(
            f"ll_{c}" for c in range(args.way))
        with open(args.details, "w", encoding="utf-8") as fh:
            fh.write(header + "\n")
            for row in detail_rows:
                fh.write(row + "\n")
    if accuracies:
        mean = float(np.mean(accuracies))
        std = float(np.std(accuracies))
        print(f"episodes={len(accuracies)} way={args.way} k={args.k} "
              f"mean_accuracy={mean:.4f} std={std:.4f}")
    else:
        print("no queries evaluated; accuracy undefined")
    return 0


def cmd_gradcheck(args) -> int:
    if args.state_dim > GRADCHECK_MAX_DIM:
        raise ValueError(f"state dim limited to {GRADCHECK_MAX_DIM} for gradient checking")
    rng = derive_rng(args.seed, "gradcheck")
    worst = 0.0
    for _ in range(args.trials):
        net = GatedTransitionNet.build(args.state_dim, (args.hidden,), args.kind,
                                       dropout_rate=0.0, rng=rng)
        # jitter all parameters so no relu pre-activation sits exactly on its
        # kink (zero bias + an all-zero binary state would otherwise do that)
        net.set_flat_params(net.flat_params() + rng.normal(0.0, 0.05, net.n_params))
        if args.kind == "continuous":
            s = rng.normal(0.0, 1.0, args.state_dim)
            s_next = rng.normal(0.0, 1.0, args.state_dim)
        else:
            s = (rng.random(args.state_dim) < 0.5).astype(float)
            s_next = (rng.random(args.state_dim) < 0.5).astype(float)

        def objective(theta, net=net, s=s, s_next=s_next):
            net.set_flat_params(theta)
            logp, grad = log_transition_grad(net, s, s_next)
            if args.corrupt:
                grad = grad + 1e-3
            return logp, grad

        worst = max(worst, grad_check(objective, net.flat_params(), eps=1e-5))
    print(f"max_relative_error={worst:.3e} over {args.trials} trials")
    if worst < GRADCHECK_TOLERANCE:
        print("PASS")
        return 0
    print("FAIL")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainorder",
        description="Learn a Markov transition operator and recover data generation order.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset with known order")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit the transition operator to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--history", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("order", help="recover the most probable generation order")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("full", "sampled", "brute"), default="full")
    p.add_argument("--num-starts", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("eval", help="score a recovered order against the truth")
    p.add_argument("--order", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--data", default=None,
                   help="dataset CSV; adds a Euclidean nearest-neighbor baseline row")
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="model")
    p.add_argument("--label", default="dataset")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("propagate", help="iterate most-probable successors from a start")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--start", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--revisit", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("oneshot", help="episodic one-shot classification benchmark")
    p.add_argument("--model", required=True)
    p.add_argument("--data", nargs="+", required=True, help="one dataset CSV per class")
    p.add_argument("--way", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--episodes", type=int, required=True)
    p.add_argument("--queries-per-class", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--details", default=None)
    p.set_defaults(func=cmd_oneshot)

    p = sub.add_parser("gradcheck", help="verify analytic gradients against finite differences")
    p.add_argument("--state-dim", type=int, default=4)
    p.add_argument("--hidden", type=int, default=8)
    p.add_argument("--kind", choices=("continuous", "binary"), default="continuous")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt", action="store_true",
                   help="self-test hook: perturb the analytic gradient; must FAIL")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataFormatError, ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
