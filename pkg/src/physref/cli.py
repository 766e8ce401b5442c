"""Command-line front end for the full pipeline.

Subcommands map one-to-one onto pipeline stages so every experiment is a
short shell script: synth -> train-pmg -> record-refs -> train-gmt -> eval,
plus analyze for clip forensics, teleop-serve for the live service, and
selftest for the built-in oracle suite.

Exit codes: 0 success, 1 validation error (bad flags, bad config, bad
inputs), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


def _cap_threads():
    """Propagate PHYSREF_THREADS to the BLAS pools before numpy loads."""
    cap = os.environ.get("PHYSREF_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ.setdefault(var, cap)


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; bad usage is a validation error
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_config_flags(p, with_out=True):
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key "
                   "(dotted path, repeatable)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    if with_out:
        p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="physref",
                description="two-stage physics-consistent motion tracking")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", parents=[], help="materialize the dataset "
                        "(synthesize gaits, inject artifacts) to clip files")
    _add_config_flags(sp)

    ap = sub.add_parser("analyze", help="artifact table for clip files "
                        "(MPJPE measured against the first clip)")
    ap.add_argument("clips", nargs="+", help="motion clip files")

    for stage in ("pmg", "gmt"):
        tp = sub.add_parser(f"train-{stage}",
                            help=f"train the {stage} stage policy")
        _add_config_flags(tp)

    rp = sub.add_parser("record-refs", help="replay a pmg policy over the "
                        "dataset and record gated physical references")
    rp.add_argument("--ckpt", required=True, help="pmg policy checkpoint")
    _add_config_flags(rp)

    ep = sub.add_parser("eval", help="evaluate a policy against the raw "
                        "references")
    ep.add_argument("--ckpt", required=True, help="policy checkpoint")
    ep.add_argument("--episodes", type=int, default=1,
                    help="episodes per clip")
    ep.add_argument("--pushes", action="store_true",
                    help="apply random base pushes during evaluation")
    _add_config_flags(ep, with_out=False)

    vp = sub.add_parser("teleop-serve", help="serve the live teleop loop")
    vp.add_argument("--bind", default="127.0.0.1:8765", metavar="HOST:PORT")
    vp.add_argument("--pmg", required=True, help="pmg checkpoint (filter)")
    vp.add_argument("--gmt", required=True, help="gmt checkpoint (tracker)")
    vp.add_argument("--turbo", action="store_true",
                    help="run the loop as fast as possible (testing)")

    sub.add_parser("selftest", help="run the built-in oracle checks")
    return p


def _load_config(args):
    from .config import load_config
    cfg = load_config(args.config, args.overrides)
    if args.seed is not None:
        import dataclasses
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _load_ckpt(path):
    from .checkpoint import load_checkpoint
    if not Path(path).exists():
        raise ValueError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _require_stage(cfg, stage_name, command):
    if cfg.stage.value != stage_name:
        from .config import ConfigError
        raise ConfigError(
            f"`{command}` needs a config with stage: {stage_name}, "
            f"got stage: {cfg.stage.value}")


def cmd_synth(args) -> int:
    from .model import load_builtin_model
    from .motion import save_motion
    from .pipeline import resolve_dataset

    cfg = _load_config(args)
    model = load_builtin_model(cfg.model)
    base = Path(args.config).parent
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for label, clip in resolve_dataset(cfg.dataset, model, cfg.seed, base):
        path = out / f"{label}.ref"
        save_motion(clip, path)
        if not args.quiet:
            print(f"wrote {path}  ({clip.n_frames} frames @ {clip.fps:g} fps,"
                  f" source {clip.source})")
    return 0


_ANALYZE_HEADER = (f"{'Clip':<24} {'Penetration':>12} {'Floating':>12} "
                   f"{'Smoothness':>12} {'MPJPE':>10}")


def cmd_analyze(args) -> int:
    from .metrics import artifact_report
    from .model import load_builtin_model
    from .motion import load_motion

    clips = [(Path(p).stem, load_motion(p)) for p in args.clips]
    model = load_builtin_model(clips[0][1].model)
    baseline = clips[0][1]
    print(_ANALYZE_HEADER)
    for name, clip in clips:
        rep = artifact_report(clip, model,
                              None if clip is baseline else baseline)
        print(f"{name:<24} {rep.penetration_fraction * 100:>11.2f}% "
              f"{rep.floating_fraction * 100:>11.2f}% "
              f"{rep.smoothness:>12.1f} {rep.mpjpe:>8.1f}mm")
    return 0


def cmd_train(args, stage_name) -> int:
    from .pipeline import train_stage

    cfg = _load_config(args)
    _require_stage(cfg, stage_name, f"train-{stage_name}")
    outcome = train_stage(cfg, args.out)
    if not args.quiet:
        last = outcome.result.last
        print(f"trained {stage_name} for {outcome.result.iterations_run} "
              f"iterations (reward {last['reward_mean']:.3f}, "
              f"termination rate {last['termination_rate']:.3f})")
        print(f"checkpoint: {outcome.checkpoint_path}")
        print(f"log:        {outcome.log_path}")
    if outcome.result.aborted:
        print("training aborted on repeated non-finite updates",
              file=sys.stderr)
        return 2
    return 0


def cmd_record_refs(args) -> int:
    from .model import load_builtin_model
    from .pipeline import (record_physical_references, resolve_dataset,
                           save_motion_set)

    cfg = _load_config(args)
    ck = _load_ckpt(args.ckpt)
    model = load_builtin_model(cfg.model)
    refs = resolve_dataset(cfg.dataset, model, cfg.seed,
                           Path(args.config).parent)
    ms = record_physical_references(ck, refs, sim_config=cfg.sim)
    save_motion_set(ms, args.out)
    if not args.quiet:
        for entry in ms.per_clip:
            print(f"recorded {entry['label']}: penetration 0.00%, "
                  f"floating 0.00%, mpjpe vs raw {entry['mpjpe_vs_raw']:.1f}mm")
    for exc in ms.excluded:
        print(f"EXCLUDED {exc['label']}: {exc['reason']}", file=sys.stderr)
    if not args.quiet:
        print(f"wrote {len(ms.clips)} physical reference(s) to {args.out}"
              f" ({len(ms.excluded)} excluded)")
    return 0


def cmd_eval(args) -> int:
    from .model import load_builtin_model
    from .pipeline import evaluate_policy, resolve_dataset
    from .sim import RandomizationRanges

    cfg = _load_config(args)
    ck = _load_ckpt(args.ckpt)
    model = load_builtin_model(cfg.model)
    refs = resolve_dataset(cfg.dataset, model, cfg.seed,
                           Path(args.config).parent)
    ranges = cfg.randomization if cfg.randomization is not None else None
    if args.pushes and ranges is None:
        ranges = RandomizationRanges()
    rep = evaluate_policy(ck, refs, episodes_per_clip=args.episodes,
                          pushes=args.pushes, ranges=ranges,
                          sim_config=cfg.sim, seed=cfg.seed)
    print(f"{'Clip':<24} {'SR':>8} {'MPJPE':>10} {'dVel':>12} {'dAcc':>10}")
    for c in rep.per_clip:
        print(f"{str(c['clip']):<24} {c['success_rate']:>7.2f}% "
              f"{c['mpjpe']:>8.1f}mm {c['dvel']:>10.1f}mm/s "
              f"{c['dacc']:>7.2f}r/s")
    print(f"{'ALL':<24} {rep.success_rate:>7.2f}% {rep.mpjpe:>8.1f}mm "
          f"{rep.dvel:>10.1f}mm/s {rep.dacc:>7.2f}r/s "
          f"  ({rep.n_episodes} episodes)")
    return 0


def cmd_teleop_serve(args) -> int:
    from .teleop.server import serve

    host, _, port = args.bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"--bind wants HOST:PORT, got {args.bind!r}")
    serve(host, int(port), pmg_path=_load_ckpt(args.pmg),
          gmt_path=_load_ckpt(args.gmt), turbo=args.turbo)
    return 0


def cmd_selftest() -> int:
    from .selftest import run_selftest
    return 0 if run_selftest() else 2


def main(argv=None) -> int:
    _cap_threads()
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "train-pmg":
            return cmd_train(args, "pmg")
        if args.command == "train-gmt":
            return cmd_train(args, "gmt")
        if args.command == "record-refs":
            return cmd_record_refs(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "teleop-serve":
            return cmd_teleop_serve(args)
        if args.command == "selftest":
            return cmd_selftest()
        raise AssertionError(f"unhandled command {args.command}")
    except (ValueError, FileNotFoundError) as e:
        # config/input validation: bad keys, missing files, wrong stages
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 -- runtime failures exit 2
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
