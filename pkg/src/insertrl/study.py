"""Experiment orchestration: training runs, condition grids, ordering study,
fine-tuning comparison, plateau analysis, and report files.

Methods: the distilled vision-free policy (ve2vf), its vision-enabled
teacher (hilserl_vptw), the from-scratch proprioceptive baseline
(hilserl_ptw), an open-loop motion primitive (dmp), and primitive plus
learned corrections (residual).
"""

from __future__ import annotations

import copy
import csv
import json
import os
import time
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .distill import (
    ACT_DIM,
    DistillConfig,
    DistillSession,
    StudentPolicy,
    TeacherPolicy,
    distill_student,
    finetune_student,
    train_teacher,
)
from .dmp import (
    DmpController,
    DmpModel,
    ResidualAgent,
    demo_to_dmp,
    residual_episode,
    train_residual,
)
from .oracle import OracleParams, oracle_action_normalized, run_oracle_episode
from .rollout import InsertionEnv, MetricsLog, eval_episode
from .sac import SacAgent, TrainConfig
from .sim import (
    Disturbance,
    EnvConfig,
    NO_DISTURBANCE,
    make_task_set,
    sample_disturbance,
)

METHODS = ("ve2vf", "hilserl_vptw", "hilserl_ptw", "dmp", "residual")
CONDITIONS = ("normal", "disturbed", "ood")


@dataclass
class ExperimentConfig:
    methods: tuple = METHODS
    seeds: tuple = (0, 1, 2)
    teacher_budget: int = 40_000
    student_budget: int = 10_000
    ptw_budget: int = 50_000
    residual_budget: int = 50_000
    extended_factor: float = 1.5
    n_eval: int = 10
    batch_size: int = 128
    hidden: tuple = (32, 32)
    finetune_task: str = "dsub"
    run_finetune: bool = True
    run_extended_ptw: bool = True
    run_ablation: bool = False
    out_dir: str | None = None

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("need at least one seed")
        for b in (self.teacher_budget, self.student_budget, self.ptw_budget,
                  self.residual_budget):
            if b <= 0:
                raise ValueError("budgets must be positive")

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(hidden=tuple(self.hidden),
                           batch_size=self.batch_size, warmup_steps=0,
                           step_budget=self.teacher_budget, seed=seed)


def config_to_doc(c: ExperimentConfig) -> dict:
    return asdict(c)


def config_from_doc(d: dict) -> ExperimentConfig:
    d = dict(d)
    for k in ("methods", "seeds", "hidden"):
        if k in d:
            d[k] = tuple(d[k])
    return ExperimentConfig(**d)


class ResultsTable:
    """Success counts per (method, condition, task) out of n_eval."""

    def __init__(self, n_eval: int):
        self.n_eval = n_eval
        self.cells = {}

    def set_cell(self, method: str, condition: str, task_id: str, wins: int):
        if not 0 <= wins <= self.n_eval:
            raise ValueError("wins out of range")
        self.cells.setdefault(method, {})[f"{condition}:{task_id}"] = wins

    def add_row(self, method: str, condition: str, row: dict):
        for task_id, wins in row.items():
            self.set_cell(method, condition, task_id, wins)

    def cell(self, method: str, condition: str, task_id: str):
        return self.cells.get(method, {}).get(f"{condition}:{task_id}")

    def condition_mean(self, method: str, condition: str) -> float:
        vals = [v for k, v in self.cells.get(method, {}).items()
                if k.startswith(condition + ":")]
        if not vals:
            return float("nan")
        return 100.0 * sum(vals) / (len(vals) * self.n_eval)

    def overall(self, method: str) -> float:
        vals = list(self.cells.get(method, {}).values())
        if not vals:
            return float("nan")
        return 100.0 * sum(vals) / (len(vals) * self.n_eval)

    def to_doc(self) -> dict:
        return {"n_eval": self.n_eval, "cells": self.cells}

    @classmethod
    def from_doc(cls, d: dict) -> "ResultsTable":
        t = cls(d["n_eval"])
        t.cells = {m: dict(v) for m, v in d["cells"].items()}
        return t

    @classmethod
    def aggregate(cls, tables) -> "ResultsTable":
        """Pool seeds: cells add up, n_eval scales."""
        tables = list(tables)
        out = cls(tables[0].n_eval * len(tables))
        for t in tables:
            for m, row in t.cells.items():
                for key, wins in row.items():
                    cur = out.cells.setdefault(m, {}).get(key, 0)
                    out.cells[m][key] = cur + wins
        return out

    def render_text(self, train_ids, ood_ids) -> str:
        cols = ([("normal", t) for t in train_ids]
                + [("disturbed", t) for t in train_ids]
                + [("ood", t) for t in ood_ids])
        name_w = max(len(m) for m in self.cells) + 2 if self.cells else 10
        header1 = (" " * name_w
                   + "| training".ljust(9 * len(train_ids) + 2)
                   + "| disturbed".ljust(9 * len(train_ids) + 2)
                   + "| out-of-distribution")
        header2 = " " * name_w + "".join(
            f"| {t[:7]:>7} " for _, t in cols) + "| overall"
        lines = [header1, header2, "-" * len(header2)]
        for m in self.cells:
            cells = "".join(
                f"| {self.cell(m, c, t)}/{self.n_eval}".ljust(10)
                for c, t in cols)
            lines.append(f"{m:<{name_w}}{cells}| {self.overall(m):5.1f}%")
        return "\n".join(lines)

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["method", "condition", "task", "successes", "n_eval"])
            for m, row in self.cells.items():
                for key, wins in row.items():
                    cond, task = key.split(":", 1)
                    w.writerow([m, cond, task, wins, self.n_eval])


def _eval_rng(seed: int, tag: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(tag.encode())]))


def evaluate(policy, tasks, condition: str, cfg: EnvConfig,
             tcfg: TrainConfig, n_eval: int = 10, seed: int = 0) -> dict:
    """n_eval deterministic episodes per task; returns {task_id: successes}.

    `policy` may be a TeacherPolicy, StudentPolicy, bare SacAgent, DmpModel
    or ResidualAgent. The disturbed condition draws fresh frame noise and
    distractors per episode.
    """
    if condition not in CONDITIONS:
        raise ValueError(f"unknown condition {condition!r}")
    rng = _eval_rng(seed, f"eval:{condition}:{getattr(policy, 'kind', type(policy).__name__)}")
    encoder = policy.encoder if isinstance(policy, TeacherPolicy) else None
    out = {}
    for task in tasks:
        wins = 0
        for _ in range(n_eval):
            dist = sample_disturbance(task, cfg, rng) \
                if condition == "disturbed" else NO_DISTURBANCE
            env = InsertionEnv(task, cfg, encoder, dist)
            ep_seed = int(rng.integers(2 ** 31))
            wins += int(_run_eval_episode(policy, env, tcfg, ep_seed))
        out[task.id] = wins
    return out


def _run_eval_episode(policy, env: InsertionEnv, tcfg: TrainConfig,
                      seed: int) -> bool:
    if isinstance(policy, (TeacherPolicy, StudentPolicy)):
        return eval_episode(policy.agent, env, tcfg, seed).success
    if isinstance(policy, SacAgent):
        return eval_episode(policy, env, tcfg, seed).success
    if isinstance(policy, DmpModel):
        env.reset(seed)
        ctrl = DmpController(policy, env.cfg)
        ctrl.begin(env, tcfg.episode_len_eval)
        for _ in range(tcfg.episode_len_eval):
            _, _, done, _ = env.step(ctrl.act(env))
            if done:
                return True
        return False
    if isinstance(policy, ResidualAgent):
        class _Fixed:
            def __init__(self, s):
                self.s = s
            def integers(self, *a, **k):
                return self.s
            def standard_normal(self, *a, **k):
                raise RuntimeError("deterministic eval draws no noise")
        return residual_episode(policy, env, tcfg, _Fixed(seed),
                                deterministic=True).success
    raise TypeError(f"cannot evaluate {type(policy).__name__}")


def kinesthetic_demo(task, cfg: EnvConfig, tcfg: TrainConfig,
                     rng: np.random.Generator):
    """Slow oracle episode standing in for a hand-guided demonstration."""
    slow = OracleParams(descent_gain=0.3, alignment_gain=0.45)
    env = InsertionEnv(task, cfg)
    for _ in range(10):
        ok, _, rows = run_oracle_episode(env, slow, tcfg, rng)
        if ok:
            return rows
    raise RuntimeError("could not record a successful demonstration")


@dataclass
class SeedOutcome:
    seed: int
    table: ResultsTable
    teacher_converged: bool = False
    student_converged: bool = False
    ptw_extended_ood: dict = field(default_factory=dict)
    finetune: dict = field(default_factory=dict)
    ablation: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)  # method -> MetricsLog


def run_seed(xcfg: ExperimentConfig, seed: int, train_tasks, eval_tasks,
             cfg: EnvConfig) -> SeedOutcome:
    tcfg = xcfg.train_config(seed)
    rng = np.random.default_rng(seed)
    table = ResultsTable(xcfg.n_eval)
    out = SeedOutcome(seed, table)
    t_start = time.perf_counter()

    def clock(name):
        out.timings[name] = round(time.perf_counter() - t_start, 1)

    def eval_all(policy, method):
        table.add_row(method, "normal", evaluate(
            policy, train_tasks, "normal", cfg, tcfg, xcfg.n_eval, seed))
        table.add_row(method, "disturbed", evaluate(
            policy, train_tasks, "disturbed", cfg, tcfg, xcfg.n_eval, seed))
        table.add_row(method, "ood", evaluate(
            policy, eval_tasks, "ood", cfg, tcfg, xcfg.n_eval, seed))

    teacher = None
    student = None
    need_teacher = any(m in xcfg.methods for m in
                       ("ve2vf", "hilserl_vptw", "hilserl_ptw"))
    if need_teacher:
        teacher = train_teacher(train_tasks, tcfg, cfg, rng,
                                step_budget=xcfg.teacher_budget)
        out.teacher_converged = teacher.converged
        out.metrics["teacher"] = teacher.metrics
        clock("teacher")
    if "hilserl_vptw" in xcfg.methods:
        eval_all(teacher, "hilserl_vptw")
        clock("eval_vptw")

    if "ve2vf" in xcfg.methods:
        dcfg = DistillConfig(student_budget=xcfg.student_budget)
        student = distill_student(teacher, train_tasks, tcfg, cfg, dcfg, rng)
        out.student_converged = student.converged
        out.metrics["student"] = student.metrics
        eval_all(student, "ve2vf")
        clock("student")

    if "hilserl_ptw" in xcfg.methods:
        dcfg0 = DistillConfig(mse_weight=0.0, kl_weight=0.0,
                              student_budget=xcfg.ptw_budget)
        session = DistillSession.create(teacher, train_tasks, tcfg, cfg,
                                        dcfg0, rng)
        ptw = session.run(xcfg.ptw_budget)
        out.metrics["ptw"] = ptw.metrics
        eval_all(ptw, "hilserl_ptw")
        clock("ptw")
        if xcfg.run_extended_ptw:
            extended_budget = int(xcfg.ptw_budget * xcfg.extended_factor)
            ptw_ext = session.run(extended_budget)
            out.ptw_extended_ood = evaluate(
                ptw_ext, eval_tasks, "ood", cfg, tcfg, xcfg.n_eval, seed)
            clock("ptw_extended")

    dmp_model = None
    if "dmp" in xcfg.methods or "residual" in xcfg.methods:
        demo_rows = kinesthetic_demo(train_tasks[0], cfg, tcfg, rng)
        dmp_model = demo_to_dmp(demo_rows, cfg.dt)
    if "dmp" in xcfg.methods:
        eval_all(dmp_model, "dmp")
        clock("dmp")
    if "residual" in xcfg.methods:
        res, res_metrics = train_residual(dmp_model, train_tasks, tcfg, cfg,
                                          rng,
                                          step_budget=xcfg.residual_budget)
        out.metrics["residual"] = res_metrics
        eval_all(res, "residual")
        clock("residual")

    if xcfg.run_finetune and "ve2vf" in xcfg.methods:
        hard = next(t for t in eval_tasks if t.id == xcfg.finetune_task)
        zero_shot = table.cell("ve2vf", "ood", hard.id)
        dcfg = DistillConfig(student_budget=xcfg.student_budget)
        base = copy.deepcopy(student)
        tuned, new_teacher = finetune_student(base, hard, tcfg, cfg, dcfg,
                                              rng, with_distillation=True)
        with_d = evaluate(tuned, [hard], "ood", cfg, tcfg, xcfg.n_eval,
                          seed + 7000)[hard.id]
        base2 = copy.deepcopy(student)
        tuned2, _ = finetune_student(base2, hard, tcfg, cfg, dcfg, rng,
                                     with_distillation=False)
        without_d = evaluate(tuned2, [hard], "ood", cfg, tcfg, xcfg.n_eval,
                             seed + 7000)[hard.id]
        teacher_prime_eval = evaluate(new_teacher, [hard], "ood", cfg, tcfg,
                                      xcfg.n_eval, seed + 7100)[hard.id]
        out.finetune = {"task": hard.id, "zero_shot": zero_shot,
                        "with_distill": with_d, "without_distill": without_d,
                        "teacher_prime_converged": new_teacher.converged,
                        "teacher_prime_eval": teacher_prime_eval}
        clock("finetune")

    if xcfg.run_ablation and "ve2vf" in xcfg.methods:
        for mask in ("p", "tw"):
            dcfg = DistillConfig(student_budget=xcfg.student_budget)
            sub = distill_student(teacher, train_tasks, tcfg, cfg, dcfg, rng,
                                  student_mask=mask)
            out.ablation[f"s{mask}"] = {
                "normal": evaluate(sub, train_tasks, "normal", cfg, tcfg,
                                   xcfg.n_eval, seed),
                "disturbed": evaluate(sub, train_tasks, "disturbed", cfg,
                                      tcfg, xcfg.n_eval, seed),
            }
        clock("ablation")
    return out


def ordering_checks(agg: ResultsTable, outcomes, xcfg: ExperimentConfig) -> dict:
    """The study's pass/fail summary over the aggregate table."""
    checks = {}
    overall = {m: agg.overall(m) for m in agg.cells}
    checks["overall"] = overall
    if all(m in overall for m in ("ve2vf", "residual", "hilserl_ptw", "dmp")):
        lower = max(overall["hilserl_ptw"], overall["dmp"])
        checks["ordering"] = {
            "ve2vf_minus_residual": round(overall["ve2vf"]
                                          - overall["residual"], 1),
            "residual_minus_next": round(overall["residual"] - lower, 1),
            "pass": (overall["ve2vf"] >= overall["residual"] + 5.0
                     and overall["residual"] >= lower + 5.0),
        }
    if "hilserl_vptw" in overall and "ve2vf" in overall:
        t_drop = agg.condition_mean("hilserl_vptw", "normal") \
            - agg.condition_mean("hilserl_vptw", "disturbed")
        s_drop = agg.condition_mean("ve2vf", "normal") \
            - agg.condition_mean("ve2vf", "disturbed")
        checks["disturbance"] = {
            "teacher_drop_points": round(t_drop, 1),
            "student_drop_points": round(s_drop, 1),
            "pass": t_drop >= 30.0 and s_drop <= 10.0,
        }
    ext = [o for o in outcomes if o.ptw_extended_ood]
    if ext and "hilserl_ptw" in agg.cells:
        base = agg.condition_mean("hilserl_ptw", "ood")
        n = sum(len(o.ptw_extended_ood) for o in ext) * ext[0].table.n_eval
        wins = sum(sum(o.ptw_extended_ood.values()) for o in ext)
        extended = 100.0 * wins / n
        checks["plateau"] = {
            "ptw_ood": round(base, 1), "ptw_extended_ood": round(extended, 1),
            "improvement_points": round(extended - base, 1),
            "pass": extended - base <= 5.0,
        }
    ft = [o.finetune for o in outcomes if o.finetune]
    if ft:
        n = len(ft) * outcomes[0].table.n_eval
        w = 100.0 * sum(f["with_distill"] for f in ft) / n
        wo = sum(f["without_distill"] for f in ft)
        zs = sum(f["zero_shot"] for f in ft)
        checks["finetune"] = {
            "zero_shot_pct": round(100.0 * zs / n, 1),
            "with_distill_pct": round(w, 1),
            "without_distill_pct": round(100.0 * wo / n, 1),
            "pass": w >= 90.0 and wo <= zs,
        }
    conv = {"teacher": all(o.teacher_converged for o in outcomes),
            "student_train_pct": round(
                agg.condition_mean("ve2vf", "normal"), 1)
            if "ve2vf" in agg.cells else None,
            "student_ood_pct": round(agg.condition_mean("ve2vf", "ood"), 1)
            if "ve2vf" in agg.cells else None}
    checks["convergence"] = conv
    return checks


@dataclass
class StudyReport:
    config: ExperimentConfig
    outcomes: list
    aggregate: ResultsTable
    checks: dict

    def to_doc(self) -> dict:
        return {
            "config": config_to_doc(self.config),
            "aggregate": self.aggregate.to_doc(),
            "checks": self.checks,
            "per_seed": [
                {"seed": o.seed, "table": o.table.to_doc(),
                 "teacher_converged": o.teacher_converged,
                 "student_converged": o.student_converged,
                 "ptw_extended_ood": o.ptw_extended_ood,
                 "finetune": o.finetune, "ablation": o.ablation,
                 "timings": o.timings}
                for o in self.outcomes
            ],
        }

    def save(self, out_dir, train_ids, ood_ids):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w") as f:
            json.dump(self.to_doc(), f, indent=1)
        self.aggregate.write_csv(os.path.join(out_dir, "aggregate.csv"))
        with open(os.path.join(out_dir, "table.txt"), "w") as f:
            f.write(self.aggregate.render_text(train_ids, ood_ids) + "\n")
        for o in self.outcomes:
            for name, log in o.metrics.items():
                log.write_csv(os.path.join(
                    out_dir, f"metrics_seed{o.seed}_{name}.csv"))


def run_study(xcfg: ExperimentConfig, cfg: EnvConfig | None = None,
              tasks=None) -> StudyReport:
    """Train and evaluate every requested method on every seed; aggregate.

    A failing stage is recorded and the study moves on to the other cells.
    """
    cfg = cfg or EnvConfig()
    train_tasks, eval_tasks = tasks if tasks is not None else make_task_set()
    outcomes = []
    for seed in xcfg.seeds:
        try:
            outcomes.append(run_seed(xcfg, seed, train_tasks, eval_tasks, cfg))
        except Exception as exc:  # keep the remaining seeds running
            bad = SeedOutcome(seed, ResultsTable(xcfg.n_eval))
            bad.finetune = {}
            bad.timings["error"] = repr(exc)
            outcomes.append(bad)
    agg = ResultsTable.aggregate([o.table for o in outcomes])
    checks = ordering_checks(agg, outcomes, xcfg)
    report = StudyReport(xcfg, outcomes, agg, checks)
    if xcfg.out_dir:
        report.save(xcfg.out_dir, [t.id for t in train_tasks],
                    [t.id for t in eval_tasks])
    return report


# ---------------------------------------------------------------------------
# training-curve analysis (plateau detection)

def training_curve_report(metrics, n_slices: int = 10, tol: float = 0.0,
                          ood_base: float | None = None,
                          ood_extended: float | None = None) -> dict:
    """Trailing probe success per task per budget slice, with a plateau flag.

    `metrics` is a MetricsLog, a list of row dicts, or a CSV path. The
    plateau slice for a task is the earliest slice after which no later
    slice improves on it by more than `tol`.
    """
    if isinstance(metrics, MetricsLog):
        rows = metrics.rows
    elif isinstance(metrics, (str, os.PathLike)):
        with open(metrics, newline="") as f:
            rows = list(csv.DictReader(f))
    else:
        rows = metrics
    probes = []
    for r in rows:
        try:
            if int(r["probe"]) != 1:
                continue
            probes.append((int(r["step"]), str(r["task"]),
                           int(r["success"])))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed metrics row: {r}") from exc
    if not probes:
        raise ValueError("no probe rows in metrics")
    max_step = max(p[0] for p in probes)
    tasks = sorted({p[1] for p in probes})
    rates = {}
    for task in tasks:
        per_slice = []
        for s in range(n_slices):
            lo = max_step * s / n_slices
            hi = max_step * (s + 1) / n_slices
            xs = [p[2] for p in probes
                  if p[1] == task and lo < p[0] <= hi]
            if xs:
                per_slice.append(sum(xs) / len(xs))
            else:
                per_slice.append(per_slice[-1] if per_slice else 0.0)
        rates[task] = per_slice
    plateaus = {}
    for task, rs in rates.items():
        flag = None
        for s in range(len(rs) - 1):
            if max(rs[s + 1:]) <= rs[s] + tol:
                flag = s
                break
        plateaus[task] = flag
    report = {"rates": rates, "plateau_slice": plateaus}
    if ood_base is not None and ood_extended is not None:
        report["ood_improvement_points"] = ood_extended - ood_base
        report["extended_helps"] = (ood_extended - ood_base) > 5.0
    return report
