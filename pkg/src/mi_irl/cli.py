"""Command-line entry point: ``mi-irl {generate,fit,eval,bench,sweep,assess}``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import serialize as ser
from .bench import ALGORITHMS, SWEEP_AXES, ExperimentConfig, _fit, bench, run_sweep
from .bounds import verify_bound_on_instance
from .elementworld import ElementWorldConfig, generate, geometric_weights, intent_policies, make_dataset
from .em import DEFAULT_L2, RewardEnsemble, center_features, e_step, hard_responsibilities
from .errors import MiIrlError
from .maxent import MaxEntModel
from .metrics import anid, gevd
from .seeding import child_seeds


def _load_instance(path):
    return ser.instance_from_dict(ser.load(path))


def cmd_generate(args):
    cw = None if args.imbalance_p is None else tuple(geometric_weights(args.imbalance_p, args.elements))
    cfg = ElementWorldConfig(args.elements, args.wind, args.height, args.width, args.seed, args.gamma, cw,
                             args.horizon)
    inst = generate(cfg)
    print(inst.render())
    if args.out:
        ser.dump(ser.instance_to_dict(inst), args.out)
    if args.demos:
        trajs, labels = make_dataset(inst, args.demos, child_seeds(args.seed, 1, 1)[0])
        out = args.data_out or "demos.json"
        ser.dump(ser.dataset_to_dict(trajs, labels), out)
        print(f"wrote {args.demos} demonstrations to {out}")
    return 0


def cmd_fit(args):
    inst = _load_instance(args.env)
    trajs, labels = ser.dataset_from_dict(ser.load(args.data))
    model = MaxEntModel(inst.mdp, inst.fmap, inst.config.max_len)
    fmap = center_features(inst.mdp, inst.fmap, trajs) if args.center else inst.fmap
    model = model.with_features(fmap)
    E = inst.config.num_elements
    K = args.K or E
    cfg = ExperimentConfig(K=K, epsilon=args.epsilon, l2=args.l2, max_em_iters=args.max_iters)
    if args.algorithm == "supervised" and labels is None:
        raise MiIrlError("the supervised baseline needs labelled demonstrations")
    ens, iters, converged, monotone = _fit(args.algorithm, model, trajs, labels, K, E, cfg, args.seed)
    out = {"ensemble": ens.to_dict(), "features": ser.features_to_dict(fmap), "algorithm": args.algorithm,
           "iterations": iters, "converged": converged, "monotone": monotone}
    print(json.dumps({k: v for k, v in out.items() if k != "features"}, indent=1))
    if args.out:
        ser.dump(out, args.out)
    return 0


def cmd_eval(args):
    inst = _load_instance(args.env)
    learned = ser.load(args.learned)
    ens_l = RewardEnsemble.from_dict(learned["ensemble"])
    fmap_l = ser.features_from_dict(learned["features"], inst.mdp) if "features" in learned else inst.fmap
    ens_gt = inst.ground_truth if args.gt is None else RewardEnsemble.from_dict(ser.load(args.gt)["ensemble"])
    rep = gevd(inst.mdp, inst.fmap, ens_gt, ens_l, learned_fmap=fmap_l)
    print(rep.table())
    result = {"gevd": rep.to_dict()}
    if args.data:
        trajs, labels = ser.dataset_from_dict(ser.load(args.data))
        if labels is None:
            print("dataset has no labels; skipping ANID")
        else:
            model = MaxEntModel(inst.mdp, fmap_l, inst.config.max_len)
            u = e_step(ens_l, model, trajs)
            a = anid(u, hard_responsibilities(labels, inst.config.num_elements), args.mc_samples, args.seed)
            print(f"ANID {a.anid:.4f}  (MI {a.mutual_information:.4f}, chance {a.expected_mi:.4f})")
            result["anid"] = a.to_dict()
    if args.out:
        ser.dump(result, args.out)
    return 0


def _config_from_args(args):
    d = ser.load(args.config)
    if args.seed is not None and "seeds" not in d:
        d["seeds"] = list(range(args.seed, args.seed + args.runs))
    if args.out:
        d["output"] = args.out
    if args.workers:
        d["workers"] = args.workers
    return ExperimentConfig.from_dict(d)


def cmd_bench(args):
    res = bench(_config_from_args(args))
    print(res.table())
    for r in res.records:
        if not r.ok:
            print(f"seed {r.seed} {r.algorithm} failed: {r.error}", file=sys.stderr)
    return 1 if res.failed else 0


def _parse_value(axis, s):
    if axis == "clustering_method":
        return s
    return int(s) if axis in ("n_demos", "K", "E") else float(s)


def cmd_sweep(args):
    cfg = _config_from_args(args)
    values = [_parse_value(args.axis, v) for v in args.values.split(",")]
    res = run_sweep(cfg, args.axis, values)
    for v, alg, a in res.aggregate_rows():
        line = f"{args.axis}={v!s:<8} {alg:<18} ANID {a['anid']:.4f} GEVD {a['gevd']:.4f}"
        if args.axis == "wind":
            line += f" margin {a['intercluster_margin']:.4f}"
        print(line)
    if not args.out:
        print(res.to_csv(), end="")
    return 1 if res.failed else 0


def cmd_assess(args):
    inst = _load_instance(args.env)
    trajs, labels = ser.dataset_from_dict(ser.load(args.data))
    if labels is None:
        raise MiIrlError("assess needs labelled demonstrations")
    model = MaxEntModel(inst.mdp, inst.fmap, inst.config.max_len)
    K = args.K or inst.config.num_elements
    check = verify_bound_on_instance(model, trajs, K, args.seed, labels, intent_policies(inst), args.limit)
    if check.report is not None:
        print(check.report.summary())
    print(f"observed first-step change {check.observed_change:.4g}  bound {check.epsilon_bound:.4g}  "
          f"assumptions {'certified' if check.guaranteed else 'not certified'}  "
          f"{'holds' if check.holds else 'exceeded'}")
    if args.out:
        ser.dump({"epsilon_bound": check.epsilon_bound, "observed_change": check.observed_change,
                  "certified": check.guaranteed,
                  "report": None if check.report is None else check.report.to_dict()}, args.out)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mi-irl", description="Multiple-intent IRL with warm-started EM.")
    p.add_argument("--seed", type=int, default=None, help="top-level seed for all randomness")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample an ElementWorld instance (and optionally demonstrations)")
    g.add_argument("--elements", type=int, default=3)
    g.add_argument("--wind", type=float, default=0.1)
    g.add_argument("--height", type=int, default=6)
    g.add_argument("--width", type=int, default=None)
    g.add_argument("--gamma", type=float, default=0.99)
    g.add_argument("--horizon", type=int, default=None)
    g.add_argument("--imbalance-p", type=float, default=None)
    g.add_argument("--demos", type=int, default=0, help="number of demonstrations to sample")
    g.add_argument("--data-out", default=None)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="fit a reward ensemble to demonstrations")
    f.add_argument("--env", required=True)
    f.add_argument("--data", required=True)
    f.add_argument("--algorithm", choices=ALGORITHMS, default="limiirl-mle")
    f.add_argument("--K", type=int, default=None)
    f.add_argument("--epsilon", type=float, default=1e-2)
    f.add_argument("--l2", type=float, default=DEFAULT_L2)
    f.add_argument("--max-iters", type=int, default=100)
    f.add_argument("--no-center", dest="center", action="store_false")
    f.add_argument("--out", default=None)
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="GEVD (and ANID given labelled data) of a learned ensemble")
    e.add_argument("--env", required=True)
    e.add_argument("--learned", required=True, help="output of `fit`")
    e.add_argument("--gt", default=None, help="reference ensemble; defaults to the instance ground truth")
    e.add_argument("--data", default=None)
    e.add_argument("--mc-samples", type=int, default=1000)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    for name, func, helptext in (("bench", cmd_bench, "run an experiment config"),
                                 ("sweep", cmd_sweep, "sweep one axis of an experiment config")):
        b = sub.add_parser(name, help=helptext)
        b.add_argument("--config", required=True)
        b.add_argument("--runs", type=int, default=1, help="seeds to derive from --seed if the config has none")
        b.add_argument("--workers", type=int, default=None)
        b.add_argument("--out", default=None)
        if name == "sweep":
            b.add_argument("--axis", choices=SWEEP_AXES, required=True)
            b.add_argument("--values", required=True, help="comma-separated axis values")
        b.set_defaults(func=func)

    a = sub.add_parser("assess", help="measure separation constants and check the warm-start bound")
    a.add_argument("--env", required=True)
    a.add_argument("--data", required=True)
    a.add_argument("--K", type=int, default=None)
    a.add_argument("--limit", type=int, default=200, help="largest trajectory class to enumerate")
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_assess)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command not in ("bench", "sweep") and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except (MiIrlError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
