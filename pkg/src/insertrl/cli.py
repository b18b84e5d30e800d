"""Command-line entry points for training, evaluation, the full study, and
the live session server."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .distill import (
    DistillConfig,
    StudentPolicy,
    TeacherPolicy,
    distill_student,
    finetune_student,
    train_ptw,
    train_teacher,
)
from .dmp import demo_to_dmp, save_dmp, train_residual, load_dmp
from .sac import TrainConfig, load_agent, save_agent
from .sim import EnvConfig, ImageEncoder, make_task_set, save_task_set
from .study import (
    ExperimentConfig,
    config_from_doc,
    evaluate,
    kinesthetic_demo,
    run_study,
)


def _load_xcfg(args) -> ExperimentConfig:
    import dataclasses
    if args.config:
        with open(args.config) as f:
            xcfg = config_from_doc(json.load(f))
    else:
        xcfg = ExperimentConfig()
    if args.seed is not None:
        xcfg = dataclasses.replace(xcfg, seeds=(args.seed,))
    if args.out:
        xcfg.out_dir = args.out
    return xcfg


def _ensure_out(args) -> str:
    out = args.out or "out"
    os.makedirs(out, exist_ok=True)
    return out


def _common(xcfg: ExperimentConfig):
    cfg = EnvConfig()
    train_tasks, eval_tasks = make_task_set()
    seed = xcfg.seeds[0]
    tcfg = xcfg.train_config(seed)
    rng = np.random.default_rng(seed)
    return cfg, train_tasks, eval_tasks, tcfg, rng, seed


def cmd_train_teacher(args):
    xcfg = _load_xcfg(args)
    out = _ensure_out(args)
    cfg, train_tasks, _, tcfg, rng, seed = _common(xcfg)
    teacher = train_teacher(train_tasks, tcfg, cfg, rng,
                            step_budget=xcfg.teacher_budget)
    save_agent(os.path.join(out, "teacher.json"), teacher.agent)
    teacher.metrics.write_csv(os.path.join(out, "teacher_metrics.csv"))
    print(f"teacher converged={teacher.converged} -> {out}/teacher.json")


def _teacher_from(path, cfg) -> TeacherPolicy:
    from .rollout import MetricsLog
    return TeacherPolicy(load_agent(path), True, MetricsLog(),
                         ImageEncoder(cfg))


def cmd_distill(args):
    xcfg = _load_xcfg(args)
    out = _ensure_out(args)
    cfg, train_tasks, _, tcfg, rng, seed = _common(xcfg)
    teacher = _teacher_from(args.teacher, cfg)
    dcfg = DistillConfig(student_budget=xcfg.student_budget)
    student = distill_student(teacher, train_tasks, tcfg, cfg, dcfg, rng)
    save_agent(os.path.join(out, "student.json"), student.agent)
    student.metrics.write_csv(os.path.join(out, "student_metrics.csv"))
    print(f"student converged={student.converged} -> {out}/student.json")


def cmd_train_ptw(args):
    xcfg = _load_xcfg(args)
    out = _ensure_out(args)
    cfg, train_tasks, _, tcfg, rng, seed = _common(xcfg)
    teacher = _teacher_from(args.teacher, cfg)
    ptw = train_ptw(teacher, train_tasks, tcfg, cfg, rng,
                    step_budget=xcfg.ptw_budget)
    save_agent(os.path.join(out, "ptw.json"), ptw.agent)
    ptw.metrics.write_csv(os.path.join(out, "ptw_metrics.csv"))
    print(f"ptw -> {out}/ptw.json")


def cmd_baseline_dmp(args):
    xcfg = _load_xcfg(args)
    out = _ensure_out(args)
    cfg, train_tasks, _, tcfg, rng, seed = _common(xcfg)
    rows = kinesthetic_demo(train_tasks[0], cfg, tcfg, rng)
    model = demo_to_dmp(rows, cfg.dt)
    save_dmp(os.path.join(out, "dmp.json"), model)
    print(f"dmp fitted from one demonstration -> {out}/dmp.json")


def cmd_baseline_residual(args):
    xcfg = _load_xcfg(args)
    out = _ensure_out(args)
    cfg, train_tasks, _, tcfg, rng, seed = _common(xcfg)
    model = load_dmp(args.dmp) if args.dmp else demo_to_dmp(
        kinesthetic_demo(train_tasks[0], cfg, tcfg, rng), cfg.dt)
    res, metrics = train_residual(model, train_tasks, tcfg, cfg, rng,
                                  step_budget=xcfg.residual_budget)
    save_agent(os.path.join(out, "residual.json"), res.agent)
    save_dmp(os.path.join(out, "residual_dmp.json"), res.dmp)
    metrics.write_csv(os.path.join(out, "residual_metrics.csv"))
    print(f"residual -> {out}/residual.json")


def cmd_eval(args):
    xcfg = _load_xcfg(args)
    cfg, train_tasks, eval_tasks, tcfg, rng, seed = _common(xcfg)
    agent = load_agent(args.policy)
    policy = _teacher_from(args.policy, cfg) if agent.view == "teacher" \
        else agent
    tasks = eval_tasks if args.condition == "ood" else train_tasks
    row = evaluate(policy, tasks, args.condition, cfg, tcfg,
                   n_eval=xcfg.n_eval, seed=seed)
    print(json.dumps({"condition": args.condition, "successes": row,
                      "n_eval": xcfg.n_eval}, indent=1))


def cmd_study(args):
    xcfg = _load_xcfg(args)
    if not xcfg.out_dir:
        xcfg.out_dir = args.out or "study_out"
    report = run_study(xcfg)
    print(json.dumps(report.checks, indent=1))
    train_tasks, eval_tasks = make_task_set()
    print(report.aggregate.render_text([t.id for t in train_tasks],
                                       [t.id for t in eval_tasks]))
    print(f"report written to {xcfg.out_dir}")


def cmd_finetune(args):
    xcfg = _load_xcfg(args)
    out = _ensure_out(args)
    cfg, train_tasks, eval_tasks, tcfg, rng, seed = _common(xcfg)
    student = StudentPolicy(load_agent(args.student), True, None)
    hard = next(t for t in eval_tasks if t.id == xcfg.finetune_task)
    dcfg = DistillConfig(student_budget=xcfg.student_budget)
    tuned, _ = finetune_student(student, hard, tcfg, cfg, dcfg, rng,
                                with_distillation=not args.no_distillation)
    save_agent(os.path.join(out, "student_finetuned.json"), tuned.agent)
    row = evaluate(tuned, [hard], "ood", cfg, tcfg, xcfg.n_eval, seed)
    print(json.dumps({"task": hard.id, "successes": row[hard.id],
                      "n_eval": xcfg.n_eval, "out": out}))


def cmd_serve(args):
    from .server import serve
    xcfg = _load_xcfg(args)
    serve(xcfg, host=args.host, port=args.port)


def cmd_tasks(args):
    out = _ensure_out(args)
    train_tasks, eval_tasks = make_task_set()
    path = os.path.join(out, "tasks.json")
    save_task_set(path, train_tasks, eval_tasks)
    print(f"task set -> {path}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="insertrl",
        description="Planar insertion: HIL-RL training, distillation, "
                    "baselines, and the robustness study")
    p.add_argument("--config", help="JSON experiment config file")
    p.add_argument("--seed", type=int, help="override: use this single seed")
    p.add_argument("--out", help="output directory")
    sub = p.add_subparsers(dest="cmd", required=True)

    sub.add_parser("train-teacher").set_defaults(fn=cmd_train_teacher)
    d = sub.add_parser("distill")
    d.add_argument("--teacher", required=True, help="teacher checkpoint")
    d.set_defaults(fn=cmd_distill)
    t = sub.add_parser("train-ptw")
    t.add_argument("--teacher", required=True,
                   help="teacher checkpoint (intervention source)")
    t.set_defaults(fn=cmd_train_ptw)
    sub.add_parser("baseline-dmp").set_defaults(fn=cmd_baseline_dmp)
    r = sub.add_parser("baseline-residual")
    r.add_argument("--dmp", help="fitted primitive JSON (else refit)")
    r.set_defaults(fn=cmd_baseline_residual)
    e = sub.add_parser("eval")
    e.add_argument("--policy", required=True, help="agent checkpoint")
    e.add_argument("--condition", default="normal",
                   choices=("normal", "disturbed", "ood"))
    e.set_defaults(fn=cmd_eval)
    sub.add_parser("study").set_defaults(fn=cmd_study)
    f = sub.add_parser("finetune")
    f.add_argument("--student", required=True, help="student checkpoint")
    f.add_argument("--no-distillation", action="store_true")
    f.set_defaults(fn=cmd_finetune)
    s = sub.add_parser("serve")
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--port", type=int, default=8800)
    s.set_defaults(fn=cmd_serve)
    sub.add_parser("tasks").set_defaults(fn=cmd_tasks)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
