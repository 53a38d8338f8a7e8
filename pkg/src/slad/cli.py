"""Command-line entry point: ``slad <command> [options]``.

Every command writes into a fresh run directory: the resolved config,
CSV logs/results, a metrics JSON, SVG figures and (for training commands)
a checkpoint.  Exit codes: 0 success, 2 configuration or startup error,
3 failure while running.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ck
from . import experiments as ex
from .config import ConfigError, RunConfig, config_hash, load_config, parse_config
from .network import EMBEDDING_CONVENTION
from .report import line_svg, scatter_svg, write_csv, write_json

log = logging.getLogger("slad")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class StartupError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run config JSON (defaults apply to missing keys)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, required=True, help="run directory; must be new or empty")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="slad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train-teacher", parents=[common], help="fit the noise-prediction teacher")
    s.add_argument("--steps", type=int, help="training steps (overrides teacher.steps)")

    s = sub.add_parser("distill", parents=[common], help="distil a few-step student from a teacher")
    s.add_argument("--checkpoint", type=Path, help="teacher checkpoint")
    s.add_argument("--steps", type=int, help="iterations (overrides distill.iterations)")

    s = sub.add_parser("sample", parents=[common], help="draw samples from a checkpoint")
    s.add_argument("--checkpoint", type=Path, required=True)
    s.add_argument("--steps", type=int, help="sampling steps (overrides sample.steps)")
    s.add_argument("--label", type=int, help="class label for every sample")
    s.add_argument("--count", type=int, help="number of samples (overrides sample.count)")
    s.add_argument("--online", action="store_true", help="use the online weights instead of the EMA copy")

    s = sub.add_parser("eval", parents=[common], help="energy distance, coverage and delta(t, k) of a student")
    s.add_argument("--checkpoint", type=Path, required=True)

    s = sub.add_parser("ablate", help="parameter sweeps")
    asub = s.add_subparsers(dest="ablation", required=True)
    for name in ("step-size", "guidance-scale", "sl-vs-dl"):
        a = asub.add_parser(name, parents=[common])
        a.add_argument("--checkpoint", type=Path, help="teacher checkpoint")
        a.add_argument("--steps", type=int, help="iterations per distillation run")
    asub.add_parser("error-surface", parents=[common])
    return p


def _load_cfg(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg.validate()


def _prepare_out(out: Path) -> Path:
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise StartupError(f"run directory {out} already has content; runs are never overwritten")
    out.mkdir(parents=True, exist_ok=True)
    return out


def arch_hash(cfg: RunConfig) -> str:
    """Hash of everything a network's weights depend on for their meaning."""
    d = cfg.to_dict()
    return config_hash({"schedule": d["schedule"], "data": d["data"], "model": d["model"],
                        "embedding": EMBEDDING_CONVENTION})


def _meta(cfg: RunConfig, kind: str, lineage: list, **extra) -> dict:
    return {"kind": kind, "format": ck.VERSION, "config_hash": cfg.hash(), "arch_hash": arch_hash(cfg),
            "schedule": cfg.to_dict()["schedule"], "arch": cfg.net_config().to_dict(),
            "data": cfg.to_dict()["data"], "embedding": EMBEDDING_CONVENTION,
            "seed_lineage": lineage, **extra}


def _load_ckpt(path: Path | None, cfg: RunConfig, kinds: tuple[str, ...]) -> ck.Checkpoint | None:
    if path is None:
        return None
    if not path.is_file():
        raise StartupError(f"checkpoint not found: {path}")
    c = ck.load(path, expect_embedding=EMBEDDING_CONVENTION)
    if c.meta.get("arch_hash") != arch_hash(cfg):
        raise ck.CheckpointError(f"{path} was written for a different schedule/data/model config "
                                 f"({c.meta.get('arch_hash')} != {arch_hash(cfg)})")
    if c.meta.get("kind") not in kinds:
        raise ck.CheckpointError(f"{path} holds a {c.meta.get('kind')} checkpoint; expected {'/'.join(kinds)}")
    return c


def _write_common(out: Path, cfg: RunConfig) -> None:
    write_json(out / "config.json", cfg.to_dict())


def cmd_train_teacher(args, cfg: RunConfig, out: Path) -> dict:
    if args.steps is not None:
        cfg = replace(cfg, teacher=replace(cfg.teacher, steps=args.steps))
    wb = ex.Workbench.from_config(cfg)
    _write_common(out, cfg)
    lineage = [{"stage": "teacher", "seed": cfg.seed}]

    def snapshot(step, params):
        ck.save(out / f"teacher_step{step:07d}.ckpt", ck.Checkpoint(_meta(cfg, "teacher", lineage, step=step), params))

    params, rows = ex.fit_teacher(wb, on_checkpoint=snapshot)
    write_csv(out / "train_log.csv", ["step", "loss", "lr", "grad_norm"], rows)
    ck.save(out / "teacher.ckpt", ck.Checkpoint(_meta(cfg, "teacher", lineage, step=cfg.teacher.steps), params))

    ref = wb.reference()
    params32 = ck.round_f32(params)
    x = ex.teacher_samples(wb, params32, cfg.eval.teacher_steps, ref.labels, cfg.seed)
    metrics = {"teacher_steps": cfg.eval.teacher_steps, **ex.quality(wb, x, ref)}
    write_json(out / "metrics.json", metrics)
    scatter_svg(out / "samples.svg", x, ref.points, f"teacher, {cfg.eval.teacher_steps}-step DDIM")
    return metrics


def cmd_distill(args, cfg: RunConfig, out: Path) -> dict:
    if args.steps is not None:
        cfg = replace(cfg, distill=replace(cfg.distill, iterations=args.steps))
    teacher = _load_ckpt(args.checkpoint, cfg, ("teacher",))
    if teacher is None and cfg.teacher_source != "analytic":
        raise StartupError("distill needs --checkpoint TEACHER unless teacher_source is 'analytic'")
    wb = ex.Workbench.from_config(cfg)
    _write_common(out, cfg)
    tparams = teacher.theta if teacher else None
    theta, theta_minus, rows = ex.run_distill(wb, tparams)
    write_csv(out / "distill_log.csv", ["step", "loss", "lr", "grad_norm"], rows)
    lineage = (teacher.meta.get("seed_lineage", []) if teacher else []) + [{"stage": "distill", "seed": cfg.seed}]
    parent = teacher.config_hash if teacher else None
    ck.save(out / "student.ckpt",
            ck.Checkpoint(_meta(cfg, "student", lineage, parent=parent, step=cfg.distill.iterations),
                          theta, theta_minus))
    thm32 = ck.round_f32(theta_minus)
    res = ex.evaluate_student(wb, thm32)
    write_csv(out / "energy_distance.csv", ["steps", "energy_distance"],
              [(n, q["energy_distance"]) for n, q in res.items()])
    ref = wb.reference()
    n_plot = max(res)
    scatter_svg(out / "samples.svg", ex.student_samples(wb, thm32, n_plot, ref.labels, cfg.seed), ref.points,
                f"{cfg.distill.mode} student, {n_plot}-step")
    metrics = {"mode": cfg.distill.mode, "by_steps": res}
    write_json(out / "metrics.json", metrics)
    return metrics


def cmd_sample(args, cfg: RunConfig, out: Path) -> dict:
    c = _load_ckpt(args.checkpoint, cfg, ("teacher", "student"))
    s = cfg.sample
    steps = args.steps if args.steps is not None else s.steps
    count = args.count if args.count is not None else s.count
    label = args.label if args.label is not None else s.label
    if steps < 1 or count < 2:
        raise ConfigError("--steps must be >= 1 and --count >= 2")
    wb = ex.Workbench.from_config(cfg)
    _write_common(out, cfg)
    labels = ex.sample_labels(wb, count, label)
    if c.meta["kind"] == "teacher":
        x = ex.teacher_samples(wb, c.theta, steps, labels, cfg.seed)
    else:
        params = c.theta if (args.online or not s.use_ema) or not c.theta_minus else c.theta_minus
        x = ex.student_samples(wb, params, steps, labels, cfg.seed, grid=s.grid)
    header = [f"x{i}" for i in range(x.shape[1])] + ["label"]
    write_csv(out / "samples.csv", header, [list(p) + [int(l)] for p, l in zip(x, labels)])
    ref = wb.reference(max(count, 2))
    if label is not None:
        ref = type(ref)(ref.points[ref.labels == label], ref.labels[ref.labels == label])
    metrics = {"kind": c.meta["kind"], "steps": steps, "count": count, "label": label}
    if len(ref) >= 2:
        metrics.update(ex.quality(wb, x, ref))
    write_json(out / "metrics.json", metrics)
    scatter_svg(out / "samples.svg", x, ref.points, f"{c.meta['kind']}, {steps}-step")
    return metrics


def cmd_eval(args, cfg: RunConfig, out: Path) -> dict:
    c = _load_ckpt(args.checkpoint, cfg, ("student", "teacher"))
    wb = ex.Workbench.from_config(cfg)
    _write_common(out, cfg)
    params = c.theta_minus or c.theta
    res = ex.evaluate_student(wb, params)
    write_csv(out / "energy_distance.csv", ["steps", "energy_distance", "modes_covered"],
              [(n, q["energy_distance"], q.get("modes_covered")) for n, q in res.items()])
    curve = ex.delta_curve(wb, params)
    write_csv(out / "delta.csv", ["t", "delta"], curve)
    line_svg(out / "delta.svg", {"delta": ([t for t, _ in curve], [v for _, v in curve])},
             "t", f"delta(t, k={cfg.eval.delta_k})", "denoising-mapping discrepancy")
    line_svg(out / "energy_distance.svg", {"student": (list(res), [q["energy_distance"] for q in res.values()])},
             "sampling steps", "energy distance")
    metrics = {"by_steps": res, "delta_top_quartile": ex.top_quartile_delta(curve),
               "delta_mean": float(np.mean([v for _, v in curve]))}
    write_json(out / "metrics.json", metrics)
    return metrics


def cmd_ablate(args, cfg: RunConfig, out: Path) -> dict:
    if getattr(args, "steps", None) is not None:
        cfg = replace(cfg, distill=replace(cfg.distill, iterations=args.steps))
    wb = ex.Workbench.from_config(cfg)
    if args.ablation == "error-surface":
        _write_common(out, cfg)
        rows = ex.ablate_error_surface(wb)
        write_csv(out / "error_surface.csv", ["t", "k", "gamma", "error"], rows)
        series = {}
        for r in rows:
            xs, ys = series.setdefault(f"t={r['t']} k={r['k']}", ([], []))
            xs.append(r["gamma"])
            ys.append(r["error"])
        line_svg(out / "error_surface.svg", series, "gamma", "exact^2 - empirical^2")
        metrics = {"max_abs_error": max(abs(r["error"]) for r in rows)}
        write_json(out / "metrics.json", metrics)
        return metrics

    teacher = _load_ckpt(args.checkpoint, cfg, ("teacher",))
    if teacher is None and cfg.teacher_source != "analytic":
        raise StartupError(f"ablate {args.ablation} needs --checkpoint TEACHER")
    _write_common(out, cfg)
    tparams = teacher.theta if teacher else None
    if args.ablation == "step-size":
        rows = ex.ablate_step_size(wb, tparams)
        write_csv(out / "step_size.csv", ["k", "multiple_estimation", "k_phi", "energy_distance"], rows)
        series = {}
        for r in rows:
            xs, ys = series.setdefault("ME" if r["multiple_estimation"] else "single jump", ([], []))
            xs.append(r["k"])
            ys.append(r["energy_distance"])
        line_svg(out / "step_size.svg", series, "skipping step k", "energy distance")
    elif args.ablation == "guidance-scale":
        rows = ex.ablate_guidance_scale(wb, tparams)
        write_csv(out / "guidance_scale.csv", ["w", "energy_distance", "modes_covered"], rows)
        line_svg(out / "guidance_scale.svg", {"w": ([r["w"] for r in rows], [r["energy_distance"] for r in rows])},
                 "guidance scale w", "energy distance")
    else:
        rows = ex.ablate_sl_vs_dl(wb, tparams)
        write_csv(out / "sl_vs_dl.csv", ["mode", "steps", "energy_distance", "modes_covered"], rows)
        series = {}
        for r in rows:
            xs, ys = series.setdefault(r["mode"], ([], []))
            xs.append(r["steps"])
            ys.append(r["energy_distance"])
        line_svg(out / "sl_vs_dl.svg", series, "sampling steps", "energy distance")
    metrics = {"rows": rows}
    write_json(out / "metrics.json", metrics)
    return metrics


COMMANDS = {"train-teacher": cmd_train_teacher, "distill": cmd_distill, "sample": cmd_sample,
            "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _load_cfg(args)
        out = _prepare_out(args.out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (StartupError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except StartupError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (ck.CheckpointError, FloatingPointError, ValueError, RuntimeError, OSError) as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME
    log.info("wrote %s", out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
