"""Scratch experiment: size the acceptance-test training budgets.

Not part of the package. Usage: size_acceptance.py [pmg_iters] [gmt_iters]
"""

import pickle
import sys
import time

import numpy as np

from physref.checkpoint import Checkpoint
from physref.config import DatasetEntry, StageConfig
from physref.metrics import artifact_report
from physref.model import load_builtin_model
from physref.motion import ArtifactSpec, GaitSpec
from physref.pipeline import (build_env, evaluate_policy,
                              record_physical_references, resolve_dataset)
from physref.rl.train import TrainConfig, train
from physref.stage import Stage

PMG_ITERS = int(sys.argv[1]) if len(sys.argv) > 1 else 400
GMT_ITERS = int(sys.argv[2]) if len(sys.argv) > 2 else 300

MODEL = "planar-walker-7"
PEN = dict(penetration_fraction=0.20, penetration_depth=0.02)
RAW_DATASET = [
    DatasetEntry(name="stand", gait=GaitSpec(type="stand", duration=48.0),
                 artifacts=ArtifactSpec(**PEN, floating_fraction=0.025,
                                        floating_offset=0.12,
                                        jitter_std=0.005)),
    DatasetEntry(name="walk", gait=GaitSpec(type="walk", duration=12.0),
                 artifacts=ArtifactSpec(**PEN, foot_skate_drift=0.1)),
    DatasetEntry(name="walk-slow",
                 gait=GaitSpec(type="walk", duration=12.0, amplitude=0.2),
                 artifacts=ArtifactSpec(**PEN, foot_skate_drift=0.1)),
    DatasetEntry(name="squat",
                 gait=GaitSpec(type="squat", duration=8.0, amplitude=0.15),
                 artifacts=ArtifactSpec(**PEN, jitter_std=0.005)),
    DatasetEntry(name="walk-fast",
                 gait=GaitSpec(type="walk", duration=12.0, amplitude=0.35,
                               frequency=1.25),
                 artifacts=ArtifactSpec(**PEN, foot_skate_drift=0.1)),
]

walker = load_builtin_model(MODEL)
raw = resolve_dataset(RAW_DATASET, walker, seed=7)

print("== raw artifact levels ==", flush=True)
for label, clip in raw:
    rep = artifact_report(clip, walker)
    print(f"  {label}: pen {rep.penetration_fraction*100:.1f}% "
          f"float {rep.floating_fraction*100:.1f}% "
          f"(float dur {rep.floating_duration:.2f} s)", flush=True)

cfg = StageConfig(stage=Stage.PMG, dataset=RAW_DATASET, model=MODEL,
                  seed=0, iterations=PMG_ITERS, n_envs=16)
env = build_env(cfg, [c for _, c in raw])
t0 = time.perf_counter()
res = train(env, TrainConfig(iterations=PMG_ITERS, seed=0, hyper=cfg.ppo,
                             checkpoint_every=0))
t_pmg = time.perf_counter() - t0
print(f"== pmg: {PMG_ITERS} iters in {t_pmg/60:.1f} min ==", flush=True)
for rec in res.history[::50] + [res.history[-1]]:
    ratio = rec["length_ratio_mean"]
    print(f"  it {rec['iteration']}: "
          f"ratio {'n/a' if ratio is None else f'{ratio:.3f}'} "
          f"term {rec['termination_rate']:.3f} "
          f"ret {rec['episode_return_mean']:.1f}", flush=True)

ck = Checkpoint(params=res.params, opt=None, stage=Stage.PMG, model=MODEL,
                iteration=res.iterations_run)
t0 = time.perf_counter()
ms = record_physical_references(ck, raw)
t_rec = time.perf_counter() - t0
print(f"== record ({t_rec:.0f} s) ==", flush=True)
for e in ms.excluded:
    print(f"  EXCLUDED {e['label']}: {e['reason']}", flush=True)
for pc in ms.per_clip:
    print(f"  {pc['label']}: mpjpe vs raw {pc['mpjpe_vs_raw']:.1f} mm "
          f"({pc['frames']} frames)", flush=True)

with open("/tmp/size_pmg.pkl", "wb") as f:
    pickle.dump({"ck": ck, "ms": ms, "raw": raw, "t_pmg": t_pmg}, f)

physical = list(zip(ms.labels, ms.clips))
for cond, refs in (("raw", raw), ("physical", physical)):
    if not refs:
        print(f"== gmt[{cond}]: skipped, no refs ==", flush=True)
        continue
    ccfg = StageConfig(stage=Stage.GMT, dataset=RAW_DATASET, model=MODEL,
                       seed=0, iterations=GMT_ITERS, n_envs=16)
    env = build_env(ccfg, [c for _, c in refs])
    t0 = time.perf_counter()
    r = train(env, TrainConfig(iterations=GMT_ITERS, seed=0, hyper=ccfg.ppo,
                               checkpoint_every=0))
    t_gmt = time.perf_counter() - t0
    gck = Checkpoint(params=r.params, opt=None, stage=Stage.GMT, model=MODEL,
                     iteration=r.iterations_run)
    print(f"== gmt[{cond}]: {GMT_ITERS} iters in {t_gmt/60:.1f} min, "
          f"final ratio {r.history[-1]['length_ratio_mean']:.3f} ==",
          flush=True)
    t0 = time.perf_counter()
    rep = evaluate_policy(gck, raw, episodes_per_clip=4, seed=100)
    print(f"  eval vs raw ({time.perf_counter()-t0:.0f} s): "
          f"SR {rep.success_rate:.1f}% mpjpe {rep.mpjpe:.1f} mm", flush=True)
