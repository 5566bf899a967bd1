"""Operator entry point: data generation, training, synthesis, evaluation,
and the streaming session service.

Every command prints a JSON summary as its last line. Exit codes: 0 success,
2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import dataset as ds
from . import goal_model as gm
from . import metrics
from . import motion_model as mm
from . import runtime as rt
from .augment import scale_object
from .errors import SceneMotionError
from .presets import get_preset
from .state import action_index
from .voxel import Scene, flatten_grid, voxelize_object


class ConfigError(Exception):
    pass


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        try:
            with open(args.config) as f:
                cfg = json.load(f)
        except ValueError as e:
            raise ConfigError(f"bad config JSON: {e}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    return cfg


def _setting(args, cfg: dict, name: str, default):
    flag = getattr(args, name.replace("-", "_"), None)
    if flag is not None:
        return flag
    if name in cfg:
        return cfg[name]
    return default


def _preset(args, cfg: dict):
    name = _setting(args, cfg, "preset", "tiny")
    try:
        return get_preset(str(name))
    except KeyError as e:
        raise ConfigError(str(e)) from None


def _load_motion(path: str) -> mm.MotionNetParams:
    if not path or not os.path.exists(path):
        raise ConfigError(f"motion checkpoint not found: {path}")
    return mm.MotionNetParams.load(path)


def _load_goal(path: str | None) -> gm.GoalNetParams | None:
    if not path:
        return None
    if not os.path.exists(path):
        raise ConfigError(f"goal checkpoint not found: {path}")
    return gm.GoalNetParams.load(path)


def _load_scene(args, cfg: dict) -> Scene:
    path = _setting(args, cfg, "scene", None)
    if path is None:
        return ds.demo_scene()
    if not os.path.exists(path):
        raise ConfigError(f"scene file not found: {path}")
    return Scene.load(path)


def cmd_datagen(args, cfg: dict) -> dict:
    preset = _preset(args, cfg)
    out = _setting(args, cfg, "out", "data")
    seed = int(_setting(args, cfg, "seed", 0))
    counts = dict(_setting(args, cfg, "counts", preset.datagen_counts))
    counts = {k: int(v) for k, v in counts.items()}
    augment = int(_setting(args, cfg, "augment", 0))
    scene = _load_scene(args, cfg)
    manifest = ds.generate_dataset(out, preset.cfg, preset.skeleton(), scene,
                                   counts, seed=seed, augment_copies=augment)
    return {"command": "datagen", "dir": out, "clips": len(manifest.clip_files),
            "stateDim": int(manifest.mean.shape[0]), "preset": preset.name}


def cmd_train_motion(args, cfg: dict) -> dict:
    preset = _preset(args, cfg)
    data_dir = _setting(args, cfg, "data", "data")
    manifest_path = os.path.join(data_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise ConfigError(f"dataset manifest not found: {manifest_path}")
    out = _setting(args, cfg, "out", "checkpoints")
    seed = int(_setting(args, cfg, "seed", 0))
    epochs = _setting(args, cfg, "epochs", None)
    epochs = int(epochs) if epochs is not None else preset.schedule.epochs
    manifest = ds.DatasetManifest.load(manifest_path)
    if manifest.cfg != preset.cfg:
        raise ConfigError("dataset was generated with a different state config")
    clips = manifest.load_clips(data_dir)
    flats, grids = ds.training_windows(clips, preset.schedule.rollout)
    params = mm.init_motion_params(preset.cfg, preset.motion_arch,
                                   np.random.default_rng(seed))
    params.mean[:] = manifest.mean
    params.std[:] = manifest.std
    os.makedirs(out, exist_ok=True)
    saved = []

    def checkpoint(epoch, trace):
        path = os.path.join(out, f"motion_epoch_{epoch:03d}.ckpt")
        params.save(path)
        saved.append(path)

    trace = mm.train_motion(params, flats, grids, preset.schedule, seed,
                            log_path=os.path.join(out, "motion_train_log.ndjson"),
                            epochs=epochs, callback=checkpoint)
    final = os.path.join(out, "motion.ckpt")
    params.save(final)
    epoch_losses = {}
    for rec in trace:
        epoch_losses.setdefault(rec["epoch"], []).append(rec["loss"])
    means = {e: float(np.mean(v)) for e, v in sorted(epoch_losses.items())}
    return {"command": "train-motion", "epochs": epochs, "windows": int(flats.shape[0]),
            "checkpoint": final, "perEpochLoss": [round(means[e], 6) for e in sorted(means)],
            "finalLoss": round(means[max(means)], 6)}


def _goal_training_rows(objects, rng, scale_copies: int):
    grids, goals6, scales = [], [], []
    for obj in objects:
        variants = [obj]
        for _ in range(scale_copies):
            variants.append(scale_object(obj, rng.uniform(0.8, 1.25, size=3)))
        for v in variants:
            grid = voxelize_object(v)
            flat = flatten_grid(grid)
            for g in v.goals:
                grids.append(flat)
                goals6.append(np.concatenate([g.position, g.direction]))
                scales.append(grid.half_diagonal())
    return np.stack(grids), np.stack(goals6), np.array(scales)


def cmd_train_goal(args, cfg: dict) -> dict:
    preset = _preset(args, cfg)
    out = _setting(args, cfg, "out", "checkpoints")
    seed = int(_setting(args, cfg, "seed", 0))
    epochs = _setting(args, cfg, "epochs", None)
    epochs = int(epochs) if epochs is not None else preset.goal_epochs
    per_cat = int(_setting(args, cfg, "objects-per-category", 4))
    scale_copies = int(_setting(args, cfg, "scale-copies", 3))
    rng = np.random.default_rng(seed)
    objects = ds.make_goal_training_objects(per_cat, seed)
    grids, goals6, scales = _goal_training_rows(objects, rng, scale_copies)
    params = gm.init_goal_params(preset.goal_arch, np.random.default_rng(seed))
    os.makedirs(out, exist_ok=True)
    trace = gm.train_goal_net(params, grids, goals6, scales, epochs, seed,
                              lr=preset.goal_lr, beta2=preset.goal_beta2,
                              log_path=os.path.join(out, "goal_train_log.ndjson"))
    final = os.path.join(out, "goal.ckpt")
    params.save(final)
    return {"command": "train-goal", "epochs": epochs, "pairs": int(grids.shape[0]),
            "checkpoint": final, "finalLoss": round(trace[-1]["loss"], 6)}


def _rollout_metrics(session, events, scene, target_id, fps):
    rows = rt.events_action_rows(events)
    target = action_index(session.action)
    t_exec = metrics.execution_time(rows, target, fps)
    pe = re = None
    if session.status == "done":
        pe, re = metrics.precision(session.root, session.goal)
    pen = metrics.penetration_pct(rt.events_joints(events), scene, target_id)
    return {"status": session.status, "frames": len(events),
            "executionTime": t_exec, "positionError": pe, "rotationError": re,
            "penetrationPct": pen}


def cmd_synth(args, cfg: dict) -> dict:
    preset = _preset(args, cfg)
    motion = _load_motion(_setting(args, cfg, "motion", "checkpoints/motion.ckpt"))
    goal_params = _load_goal(_setting(args, cfg, "goal", None))
    scene = _load_scene(args, cfg)
    object_id = str(_setting(args, cfg, "object", scene.objects[0].id))
    action = str(_setting(args, cfg, "action", "sit"))
    seed = int(_setting(args, cfg, "seed", 0))
    out = _setting(args, cfg, "out", "synth_out")
    max_seconds = float(_setting(args, cfg, "max-seconds", rt.SESSION_CAP_SECONDS))
    skel = preset.skeleton()
    if skel.joint_count != motion.cfg.joints:
        raise ConfigError("preset skeleton does not match the checkpoint state config")
    session = rt.start_session(scene, object_id, action, seed, motion, goal_params,
                               skeleton=skel)
    events = rt.run_session(session, max_seconds)
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "frames.ndjson"), "w") as f:
        for e in events:
            f.write(json.dumps(e.to_dict()) + "\n")
    report = _rollout_metrics(session, events, scene, object_id, motion.cfg.fps)
    metrics.save_report(report, os.path.join(out, "report.json"))
    summary = {"command": "synth", "object": object_id, "action": action,
               "status": session.status, "frames": len(events),
               "executionTime": ("inf" if math.isinf(report["executionTime"])
                                 else round(report["executionTime"], 3)),
               "out": out}
    return summary


def cmd_eval(args, cfg: dict) -> dict:
    preset = _preset(args, cfg)
    motion = _load_motion(_setting(args, cfg, "motion", "checkpoints/motion.ckpt"))
    goal_params = _load_goal(_setting(args, cfg, "goal", None))
    scene = _load_scene(args, cfg)
    data_dir = _setting(args, cfg, "data", "data")
    object_id = str(_setting(args, cfg, "object", scene.objects[0].id))
    action = str(_setting(args, cfg, "action", "sit"))
    seed = int(_setting(args, cfg, "seed", 0))
    runs = int(_setting(args, cfg, "runs", 5))
    max_seconds = float(_setting(args, cfg, "max-seconds", 20.0))
    out = _setting(args, cfg, "out", "eval_out")
    skel = preset.skeleton()
    if skel.joint_count != motion.cfg.joints:
        raise ConfigError("preset skeleton does not match the checkpoint state config")

    per_run = []
    feats = []
    subset_rows = []
    for r in range(runs):
        session = rt.start_session(scene, object_id, action, seed + r, motion,
                                   goal_params, skeleton=skel)
        run_states: list = []
        events = rt.run_session(session, max_seconds, state_sink=run_states)
        per_run.append(_rollout_metrics(session, events, scene, object_id,
                                        motion.cfg.fps))
        feats.append(metrics.pose_features(run_states))
        subset_rows.append(metrics.feature_subset(run_states))
    report = {"runs": per_run}
    if runs >= 2:
        report["apd"] = metrics.apd_rollouts(feats)
    manifest_path = os.path.join(data_dir, "manifest.json")
    if os.path.exists(manifest_path):
        manifest = ds.DatasetManifest.load(manifest_path)
        if manifest.cfg == motion.cfg:
            clips = manifest.load_clips(data_dir)
            gt = metrics.feature_subset([s for c in clips for s in c.states()])
            gen = np.concatenate(subset_rows)
            report["frechet"] = metrics.frechet_distance(gt, gen)
    finite = [m["executionTime"] for m in per_run if math.isfinite(m["executionTime"])]
    report["successRate"] = len(finite) / max(len(per_run), 1)
    report["meanExecutionTime"] = float(np.mean(finite)) if finite else math.inf
    report["meanPenetrationPct"] = float(np.mean([m["penetrationPct"] for m in per_run]))
    os.makedirs(out, exist_ok=True)
    metrics.save_report(report, os.path.join(out, "report.json"))
    metrics.write_csv_table(per_run, os.path.join(out, "report.csv"))
    summary = {"command": "eval", "runs": runs,
               "apd": round(report.get("apd", 0.0), 6),
               "frechet": round(report["frechet"], 6) if "frechet" in report else None,
               "successRate": report["successRate"], "out": out}
    return summary


def cmd_serve(args, cfg: dict) -> dict:
    preset = _preset(args, cfg)
    motion = _load_motion(_setting(args, cfg, "motion", "checkpoints/motion.ckpt"))
    goal_params = _load_goal(_setting(args, cfg, "goal", None))
    scene = _load_scene(args, cfg)
    host = str(_setting(args, cfg, "host", "127.0.0.1"))
    port = int(_setting(args, cfg, "port", 8765))
    max_seconds = _setting(args, cfg, "max-seconds", None)
    max_seconds = float(max_seconds) if max_seconds is not None else None
    skel = preset.skeleton()
    if skel.joint_count != motion.cfg.joints:
        raise ConfigError("preset skeleton does not match the checkpoint state config")

    def ready(service):
        print(json.dumps({"type": "ready", "address": list(service.address)}), flush=True)

    stats = rt.serve(scene, motion, goal_params, host=host, port=port,
                     max_seconds=max_seconds, skeleton=skel, ready_callback=ready)
    return {"command": "serve", **stats}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scenemotion",
        description="Stochastic scene-aware character motion: data, training, "
                    "synthesis, evaluation, serving.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--preset", choices=["full", "tiny"], help="hyperparameter preset")
        p.add_argument("--out", help="output directory or file")

    p = sub.add_parser("datagen", help="generate the synthetic clip corpus")
    common(p)
    p.add_argument("--scene", help="scene JSON (default: built-in demo scene)")
    p.add_argument("--augment", type=int, help="number of augmented clip copies")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train-motion", help="train the motion model with scheduled sampling")
    common(p)
    p.add_argument("--data", help="dataset directory from datagen")
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.set_defaults(func=cmd_train_motion)

    p = sub.add_parser("train-goal", help="train the goal sampler")
    common(p)
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.add_argument("--objects-per-category", type=int, help="training objects per category")
    p.add_argument("--scale-copies", type=int, help="scaled variants per object")
    p.set_defaults(func=cmd_train_goal)

    p = sub.add_parser("synth", help="run one headless session and dump frames + metrics")
    common(p)
    p.add_argument("--motion", help="motion checkpoint path")
    p.add_argument("--goal", help="goal checkpoint path (optional)")
    p.add_argument("--scene", help="scene JSON")
    p.add_argument("--object", help="target object id")
    p.add_argument("--action", choices=["sit", "liedown"], help="target action")
    p.add_argument("--max-seconds", type=float, help="simulation cap")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="multi-run evaluation report (APD, FD, precision)")
    common(p)
    p.add_argument("--motion", help="motion checkpoint path")
    p.add_argument("--goal", help="goal checkpoint path (optional)")
    p.add_argument("--scene", help="scene JSON")
    p.add_argument("--data", help="dataset directory for the ground-truth side")
    p.add_argument("--object", help="target object id")
    p.add_argument("--action", choices=["sit", "liedown"], help="target action")
    p.add_argument("--runs", type=int, help="number of seeded rollouts")
    p.add_argument("--max-seconds", type=float, help="per-rollout cap")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the streaming session service")
    common(p)
    p.add_argument("--motion", help="motion checkpoint path")
    p.add_argument("--goal", help="goal checkpoint path (optional)")
    p.add_argument("--scene", help="scene JSON")
    p.add_argument("--host", help="bind host")
    p.add_argument("--port", type=int, help="bind port")
    p.add_argument("--max-seconds", type=float, help="stop serving after this long")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        summary = args.func(args, cfg)
    except ConfigError as e:
        print(json.dumps({"error": str(e), "kind": "config"}, sort_keys=True))
        return 2
    except SceneMotionError as e:
        print(json.dumps({"error": str(e), "kind": type(e).__name__}, sort_keys=True))
        return 3
    except Exception as e:  # noqa: BLE001 - report any failure as exit 3
        print(json.dumps({"error": f"{type(e).__name__}: {e}", "kind": "runtime"},
                         sort_keys=True))
        return 3
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
