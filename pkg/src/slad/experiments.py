"""Orchestration shared by the CLI and the long-running tests.

Functions here take a :class:`Workbench` (schedule, data sampler and network
shape derived from one run config) and return plain arrays and row dicts;
writing files is left to the caller.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .data import Sampler
from .distill import DistillConfig, consistency_fn, distill
from .metrics import delta_error, energy_distance, mode_coverage
from .network import NetConfig, Params, init_params
from .schedule import NoiseSchedule
from .solver import AnalyticTeacher, ddim_sample, multistep_sample, sampling_grid
from .subpath import sigma_error_surface
from .teacher import eps_fn_of, train_teacher

log = logging.getLogger(__name__)

# Batch index of the held-out reference set; training never reaches it.
REFERENCE_INDEX = 2**31 - 1


@dataclass
class Workbench:
    cfg: RunConfig
    sched: NoiseSchedule
    data: Sampler
    net: NetConfig

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "Workbench":
        return cls(cfg, cfg.make_schedule(), Sampler(cfg.dataset_spec(), cfg.seed), cfg.net_config())

    def reference(self, n: int | None = None):
        return self.data.batch(REFERENCE_INDEX, n or self.cfg.eval.n_samples)

    def has_modes(self) -> bool:
        return self.data.spec.kind == "gaussian_mixture"


def analytic_teacher(wb: Workbench) -> AnalyticTeacher:
    return AnalyticTeacher(wb.data.mode_centers()[0], wb.data.mode_scale())


def teacher_eps(wb: Workbench, teacher_params: Params | None):
    if wb.cfg.teacher_source == "analytic":
        return analytic_teacher(wb).eps_fn(wb.sched)
    if teacher_params is None:
        raise ValueError("a teacher checkpoint is required unless teacher_source is 'analytic'")
    return eps_fn_of(wb.net, teacher_params)


def fit_teacher(wb: Workbench, steps: int | None = None, on_checkpoint=None):
    tcfg = wb.cfg.teacher if steps is None else replace(wb.cfg.teacher, steps=steps)
    return train_teacher(wb.net, wb.data, wb.sched, tcfg, wb.cfg.seed, on_checkpoint=on_checkpoint)


def student_init(wb: Workbench, teacher_params: Params | None) -> Params:
    """Students start from the teacher network; with no network teacher, from a fresh fit."""
    if teacher_params is not None:
        return {k: v.copy() for k, v in teacher_params.items()}
    log.info("no teacher network given; fitting one for %d steps as the student's start", wb.cfg.teacher.steps)
    return fit_teacher(wb)[0]


def run_distill(wb: Workbench, teacher_params: Params | None, dcfg: DistillConfig | None = None,
                init: Params | None = None):
    dcfg = dcfg or wb.cfg.distill
    eps = teacher_eps(wb, teacher_params)
    start = init if init is not None else student_init(wb, teacher_params)
    return distill(wb.net, start, eps, wb.data, dcfg, wb.sched, wb.cfg.seed)


def sample_labels(wb: Workbench, count: int, label: int | None = None) -> np.ndarray:
    if label is not None:
        if not 0 <= label < wb.net.n_labels:
            raise ValueError(f"label {label} outside [0, {wb.net.n_labels})")
        return np.full(count, label)
    return wb.data.batch(REFERENCE_INDEX - 1, count).labels


def student_samples(wb: Workbench, params: Params, n_steps: int, labels, seed: int,
                    grid: str | None = None) -> np.ndarray:
    kind = grid or wb.cfg.eval.grid
    times = sampling_grid(wb.sched.T, n_steps, kind, align=wb.cfg.distill.k)
    rng = np.random.default_rng([seed, 7, n_steps])
    F = consistency_fn(wb.net, params, wb.sched)
    return multistep_sample(F, n_steps, labels, wb.sched, rng, len(labels), wb.net.dim, times)


def teacher_samples(wb: Workbench, params: Params | None, n_steps: int, labels, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 8, n_steps])
    z = rng.standard_normal((len(labels), wb.net.dim))
    return ddim_sample(teacher_eps(wb, params), z, n_steps, labels, wb.sched)


def quality(wb: Workbench, samples: np.ndarray, reference) -> dict:
    out = {"energy_distance": energy_distance(samples, reference.points)}
    if wb.has_modes():
        covered, hist = mode_coverage(samples, wb.data.mode_centers(), wb.cfg.eval.coverage_threshold)
        out["modes_covered"] = covered
        out["mode_histogram"] = hist.tolist()
    return out


def evaluate_student(wb: Workbench, params: Params, steps=None, seed: int | None = None) -> dict:
    """Energy distance (and coverage for mixtures) of few-step samples, per step count."""
    seed = wb.cfg.seed if seed is None else seed
    ref = wb.reference()
    res = {}
    for n in steps or wb.cfg.eval.steps:
        x = student_samples(wb, params, n, ref.labels, seed)
        res[int(n)] = quality(wb, x, ref)
    return res


def delta_curve(wb: Workbench, params: Params, seed: int | None = None):
    e = wb.cfg.eval
    F = consistency_fn(wb.net, params, wb.sched)
    return delta_error(F, wb.data, e.delta_k, wb.sched, e.delta_samples, e.delta_t_min,
                       seed=wb.cfg.seed if seed is None else seed, noise=e.delta_noise)


def top_quartile_delta(curve) -> float:
    """Mean of delta over the grid times in the top quarter of ``[0, T]``."""
    ts = np.array([t for t, _ in curve])
    vs = np.array([v for _, v in curve])
    cut = 0.75 * ts.max()
    return float(vs[ts >= cut].mean())


def largest_divisor_at_most(k: int, cap: int) -> int:
    return max(d for d in range(1, min(k, cap) + 1) if k % d == 0)


def ablate_step_size(wb: Workbench, teacher_params, init=None):
    """Distil once per (k, ME on/off) and score ``ablate.eval_steps``-step samples."""
    a = wb.cfg.ablate
    init = init if init is not None else student_init(wb, teacher_params)
    rows = []
    for k in a.step_sizes:
        for me in (True, False):
            k_phi = largest_divisor_at_most(k, wb.cfg.distill.k_phi) if me else k
            dcfg = replace(wb.cfg.distill, k=k, k_phi=k_phi, multiple_estimation=me)
            _, thm, _ = run_distill(wb, teacher_params, dcfg, init)
            q = evaluate_student(wb, thm, [a.eval_steps])[a.eval_steps]
            rows.append({"k": k, "multiple_estimation": me, "k_phi": k_phi,
                         "energy_distance": q["energy_distance"]})
            log.info("step-size k=%d me=%s ed=%.5f", k, me, q["energy_distance"])
    return rows


def ablate_guidance_scale(wb: Workbench, teacher_params, init=None):
    a = wb.cfg.ablate
    init = init if init is not None else student_init(wb, teacher_params)
    rows = []
    for w in a.guidance_scales:
        _, thm, _ = run_distill(wb, teacher_params, replace(wb.cfg.distill, w=float(w)), init)
        q = evaluate_student(wb, thm, [a.eval_steps])[a.eval_steps]
        rows.append({"w": float(w), "energy_distance": q["energy_distance"],
                     "modes_covered": q.get("modes_covered")})
    return rows


def ablate_sl_vs_dl(wb: Workbench, teacher_params, init=None):
    a = wb.cfg.ablate
    init = init if init is not None else student_init(wb, teacher_params)
    rows = []
    for mode in a.modes:
        _, thm, _ = run_distill(wb, teacher_params, replace(wb.cfg.distill, mode=mode), init)
        for n, q in evaluate_student(wb, thm).items():
            rows.append({"mode": mode, "steps": n, "energy_distance": q["energy_distance"],
                         "modes_covered": q.get("modes_covered")})
    return rows


def ablate_error_surface(wb: Workbench):
    a = wb.cfg.ablate
    grid = np.linspace(0.0, 1.0, a.surface_gamma_points)
    rows = []
    for t in a.surface_t:
        for k in a.surface_k:
            if k > t:
                continue
            for g, e in zip(grid, sigma_error_surface(t, k, wb.sched, grid)):
                rows.append({"t": t, "k": k, "gamma": float(g), "error": float(e)})
    return rows


def fresh_params(wb: Workbench) -> Params:
    return init_params(wb.net, wb.cfg.seed)
