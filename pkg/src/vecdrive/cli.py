"""Command-line pipeline driver.

Subcommands compose into the full experimental workflow over synthetic
data: generate scenarios, generate the QA dataset, train the planner with
a frozen oracle supplying commands, then evaluate displacement/collision,
explanation quality, planning accuracy and oracle latency.

    vecdrive simgen --out runs/demo --n 200 --seed 7 --suite MIXED --train-frac 0.8
    vecdrive qagen --scenarios runs/demo/scenarios.jsonl --out runs/demo/qa.jsonl
    vecdrive train --scenarios runs/demo/scenarios_train.jsonl --out runs/demo
    vecdrive eval-plan --scenarios runs/demo/scenarios_eval.jsonl \
        --checkpoint runs/demo/checkpoint.json --out runs/demo
    vecdrive eval-text --scenarios runs/demo/scenarios_eval.jsonl --out runs/demo
    vecdrive eval-actions --scenarios runs/demo/scenarios_eval.jsonl \
        --qa runs/demo/qa.jsonl --out runs/demo
    vecdrive bench-oracle --scenarios runs/demo/scenarios_eval.jsonl --out runs/demo
    vecdrive report --dir runs/demo

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical
divergence during training, 5 external-oracle failure.

``--config FILE`` supplies defaults for any flag (JSON object keyed by
the long flag name with dashes replaced by underscores); explicit flags
win. The ``--oracle`` endpoint is ``rule``, ``exec:CMD`` or
``tcp:HOST:PORT``. ``VLAD_LOG=debug|info|warn`` controls diagnostics on
stderr; results go to stdout and ``--out`` files only.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
import time

from . import jsonio
from .external import OracleError, open_oracle
from .oracle import (
    Format,
    QATask,
    generate_qa,
    planning_accuracy,
    qa_item_from_dict,
    qa_item_to_dict,
    rule_oracle_decide,
)
from .planmetrics import (
    EGO_EXTENT,
    PlanEvalRow,
    collision_horizons,
    evaluate_explanations,
    l2_horizons,
    latency_stats,
    mean_rows,
)
from .planner import (
    PlannerConfig,
    PlannerError,
    TrainingDiverged,
    forward,
    init_model,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .report import (
    plan_row_from_dict,
    plan_row_to_dict,
    render_actions_table,
    render_confusion,
    render_latency_table,
    render_plan_table,
    render_text_table,
    text_row_from_dict,
    text_row_to_dict,
)
from .scene import (
    MetaAction,
    ScenarioLoadError,
    Trajectory,
    ValidationError,
    load_scenarios,
    save_scenarios,
)
from .simgen import GenSpec, Suite, generate, split

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4
EXIT_ORACLE = 5

log = logging.getLogger("vecdrive")


class ConfigError(Exception):
    pass


def _setup_logging() -> None:
    level_name = os.environ.get("VLAD_LOG", "warn").lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}
    if level_name not in levels:
        raise ConfigError(f"VLAD_LOG must be debug|info|warn, got {level_name!r}")
    logging.basicConfig(stream=sys.stderr, level=levels[level_name],
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_config_file(args: argparse.Namespace) -> None:
    """Fill None-valued flags from the --config JSON object.

    A key named after the subcommand may hold a section of
    command-specific values; it is applied before the top-level keys, so
    one config file can drive the whole pipeline. Explicit flags always
    win.
    """
    path = getattr(args, "config", None)
    if not path:
        return
    try:
        with open(path, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except ValueError as e:
        raise ConfigError(f"config {path}: invalid JSON: {e}") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"config {path}: expected a JSON object")
    section = obj.get(args.command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"config {path}: section {args.command!r} must be an object")
    for source in (section, obj):
        for key, value in source.items():
            attr = key.replace("-", "_")
            if hasattr(args, attr) and getattr(args, attr) is None:
                setattr(args, attr, value)


def _require(args: argparse.Namespace, names: list[str]) -> None:
    for name in names:
        if getattr(args, name) is None:
            flag = "--" + name.replace("_", "-")
            raise ConfigError(f"missing required option {flag}")


def _defaults(args: argparse.Namespace, **values) -> None:
    for name, value in values.items():
        if getattr(args, name, None) is None:
            setattr(args, name, value)


def _out_dir(args: argparse.Namespace) -> str:
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"--out {out}: {e}") from None
    return out


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


@contextlib.contextmanager
def _oracle(args: argparse.Namespace):
    oracle = open_oracle(args.oracle, timeout=float(args.timeout))
    try:
        yield oracle
    finally:
        close = getattr(oracle, "close", None)
        if close is not None:
            close()


def _gen_spec(args: argparse.Namespace) -> GenSpec:
    try:
        suite = Suite.parse(args.suite)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    spec = GenSpec(
        n_scenarios=int(args.n), seed=int(args.seed), suite=suite,
        agent_density=float(args.density),
        speed_range=(float(args.speed_min), float(args.speed_max)),
    )
    try:
        spec.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return spec


def _planner_config(args: argparse.Namespace) -> PlannerConfig:
    config = PlannerConfig(d_model=int(args.d_model), n_heads=int(args.n_heads),
                           hidden=int(args.hidden))
    try:
        config.validate()
    except PlannerError as e:
        raise ConfigError(str(e)) from None
    return config


def _constant_velocity_baseline(scenario) -> Trajectory:
    v = scenario.ego.speed
    c, s = math.cos(scenario.ego.heading), math.sin(scenario.ego.heading)
    x0, y0 = scenario.ego.position
    return Trajectory(tuple(
        (x0 + v * 0.5 * k * c, y0 + v * 0.5 * k * s) for k in range(1, 7)
    ))


def _decision_text(decision, format: Format) -> str:
    return decision.rationale_long if format is Format.LONG else decision.rationale_short


# --- subcommands ---------------------------------------------------------------

def cmd_simgen(args: argparse.Namespace) -> int:
    _defaults(args, n=100, seed=0, suite="MIXED", density=0.5,
              speed_min=2.0, speed_max=6.0)
    _require(args, ["out"])
    spec = _gen_spec(args)
    out = _out_dir(args)
    scenarios = generate(spec)
    save_scenarios(scenarios, os.path.join(out, "scenarios.jsonl"))
    print(f"wrote {len(scenarios)} scenarios to {out}/scenarios.jsonl")
    if args.train_frac is not None:
        frac = float(args.train_frac)
        if not (0.0 < frac < 1.0):
            raise ConfigError(f"--train-frac {frac} outside (0, 1)")
        train_set, eval_set = split(scenarios, frac, spec.seed)
        save_scenarios(train_set, os.path.join(out, "scenarios_train.jsonl"))
        save_scenarios(eval_set, os.path.join(out, "scenarios_eval.jsonl"))
        print(f"split {len(train_set)} train / {len(eval_set)} eval")
    return EXIT_OK


def cmd_qagen(args: argparse.Namespace) -> int:
    _require(args, ["scenarios", "out"])
    scenarios = load_scenarios(args.scenarios)
    counts = {task: 0 for task in QATask}
    actions = {action: 0 for action in MetaAction}
    lines = []
    for scenario in scenarios:
        for item in generate_qa(scenario):
            counts[item.task] += 1
            if item.gt_action is not None:
                actions[item.gt_action] += 1
            lines.append(jsonio.dumps(qa_item_to_dict(item)))
    _write(args.out, "".join(line + "\n" for line in lines))
    total = sum(counts.values())
    print(f"wrote {total} QA items to {args.out}")
    for task in QATask:
        print(f"  {task.value}: {counts[task]}")
    print("planning gt_action distribution: "
          + ", ".join(f"{a.value}={actions[a]}" for a in MetaAction))
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    _defaults(args, epochs=50, lr=1e-2, seed=7, d_model=32, n_heads=2,
              hidden=64, oracle="rule", timeout=10.0)
    _require(args, ["scenarios", "out"])
    config = _planner_config(args)
    scenarios = load_scenarios(args.scenarios)
    out = _out_dir(args)
    model = init_model(config, int(args.seed))
    log.info("training on %d scenarios for %d epochs (lr=%g, seed=%d)",
             len(scenarios), int(args.epochs), float(args.lr), int(args.seed))
    with _oracle(args) as oracle:
        trained, curve = train(model, scenarios, oracle,
                               epochs=int(args.epochs), lr=float(args.lr),
                               seed=int(args.seed))
    checkpoint_path = os.path.join(out, "checkpoint.json")
    save_checkpoint(trained, checkpoint_path)
    curve_lines = ["epoch,mean_loss"]
    curve_lines += [f"{i},{jsonio.format_float(loss)}" for i, loss in enumerate(curve)]
    _write(os.path.join(out, "loss_curve.csv"), "\n".join(curve_lines) + "\n")
    print(f"wrote {checkpoint_path}")
    print(f"final mean loss {curve[-1]:.6f} (initial {curve[0]:.6f})")
    return EXIT_OK


def cmd_eval_plan(args: argparse.Namespace) -> int:
    _defaults(args, oracle="rule", predict="model", timeout=10.0)
    _require(args, ["scenarios", "out"])
    if args.predict not in ("model", "gt"):
        raise ConfigError(f"--predict must be model|gt, got {args.predict!r}")
    model = None
    if args.predict == "model":
        _require(args, ["checkpoint"])
        model = load_checkpoint(args.checkpoint)
    scenarios = load_scenarios(args.scenarios)
    if not scenarios:
        raise ConfigError(f"{args.scenarios} holds no scenarios")
    rows_l2 = {"planner": [], "const-velocity": []}
    rows_col = {"planner": [], "const-velocity": []}
    with _oracle(args) as oracle:
        for scenario in scenarios:
            command = oracle.decide(scenario, Format.SHORT).action
            if model is not None:
                pred = forward(model, scenario, command)
            else:
                pred = scenario.gt_future
            baseline = _constant_velocity_baseline(scenario)
            rows_l2["planner"].append(l2_horizons(pred, scenario.gt_future))
            rows_l2["const-velocity"].append(l2_horizons(baseline, scenario.gt_future))
            rows_col["planner"].append(
                collision_horizons(pred, EGO_EXTENT, scenario.agents))
            rows_col["const-velocity"].append(
                collision_horizons(baseline, EGO_EXTENT, scenario.agents))
    table_rows = {}
    for name in ("planner", "const-velocity"):
        row = PlanEvalRow(l2=mean_rows(rows_l2[name]), collision=mean_rows(rows_col[name]))
        row.validate()
        table_rows[name] = row
    out = _out_dir(args)
    payload = {"rows": {name: plan_row_to_dict(r) for name, r in table_rows.items()}}
    _write(os.path.join(out, "eval_plan.json"), jsonio.dumps(payload) + "\n")
    table = render_plan_table(table_rows)
    _write(os.path.join(out, "eval_plan.txt"), table)
    print(table, end="")
    return EXIT_OK


def cmd_eval_text(args: argparse.Namespace) -> int:
    _defaults(args, oracle="rule", format="long", timeout=10.0)
    _require(args, ["scenarios", "out"])
    fmt = Format.parse(args.format)
    scenarios = load_scenarios(args.scenarios)
    if not scenarios:
        raise ConfigError(f"{args.scenarios} holds no scenarios")
    candidates, references = [], []
    with _oracle(args) as oracle:
        for scenario in scenarios:
            candidates.append(_decision_text(oracle.decide(scenario, fmt), fmt))
            references.append(_decision_text(rule_oracle_decide(scenario, fmt), fmt))
    row = evaluate_explanations(candidates, references)
    out = _out_dir(args)
    name = args.oracle
    payload = {"rows": {name: text_row_to_dict(row)}}
    _write(os.path.join(out, "eval_text.json"), jsonio.dumps(payload) + "\n")
    table = render_text_table({name: row})
    _write(os.path.join(out, "eval_text.txt"), table)
    print(table, end="")
    return EXIT_OK


def cmd_eval_actions(args: argparse.Namespace) -> int:
    _defaults(args, oracle="rule", timeout=10.0)
    _require(args, ["scenarios", "qa", "out"])
    scenarios = load_scenarios(args.scenarios)
    labels = {}
    with open(args.qa, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            item = qa_item_from_dict(jsonio.loads(line))
            if item.task is QATask.PLANNING:
                labels[item.scenario_id] = item.gt_action
    missing = [s.id for s in scenarios if s.id not in labels]
    if missing:
        raise ConfigError(f"{args.qa} lacks planning labels for {len(missing)} "
                          f"scenarios (first missing: {missing[0]!r})")
    decided, expected = [], []
    confusion: dict[str, dict[str, int]] = {
        a.value: {b.value: 0 for b in MetaAction} for a in MetaAction
    }
    with _oracle(args) as oracle:
        for scenario in scenarios:
            decision = oracle.decide(scenario, Format.SHORT).action
            label = labels[scenario.id]
            decided.append(decision)
            expected.append(label)
            confusion[label.value][decision.value] += 1
    accuracy = planning_accuracy(decided, expected)
    out = _out_dir(args)
    name = args.oracle
    payload = {"rows": {name: {"accuracy": accuracy, "confusion": confusion}}}
    _write(os.path.join(out, "eval_actions.json"), jsonio.dumps(payload) + "\n")
    table = render_actions_table({name: accuracy}) + render_confusion(confusion)
    _write(os.path.join(out, "eval_actions.txt"), table)
    print(table, end="")
    return EXIT_OK


def cmd_bench_oracle(args: argparse.Namespace) -> int:
    _defaults(args, oracle="rule", timeout=10.0, warmup=3)
    _require(args, ["scenarios", "out"])
    scenarios = load_scenarios(args.scenarios)
    if not scenarios:
        raise ConfigError(f"{args.scenarios} holds no scenarios")
    rows = {}
    with _oracle(args) as oracle:
        for label, fmt in (("Long", Format.LONG), ("Short", Format.SHORT)):
            for scenario in scenarios[:int(args.warmup)]:
                oracle.decide(scenario, fmt)
            samples = []
            for scenario in scenarios:
                start = time.perf_counter()
                oracle.decide(scenario, fmt)
                samples.append(time.perf_counter() - start)
            rows[label] = latency_stats(samples)
    out = _out_dir(args)
    payload = {"rows": rows}
    _write(os.path.join(out, "bench.json"), jsonio.dumps(payload) + "\n")
    table = render_latency_table(rows)
    _write(os.path.join(out, "bench.txt"), table)
    print(table, end="")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    _require(args, ["dir"])
    found = False
    sections = (
        ("eval_plan.json", lambda obj: render_plan_table(
            {name: plan_row_from_dict(r) for name, r in obj["rows"].items()})),
        ("eval_text.json", lambda obj: render_text_table(
            {name: text_row_from_dict(r) for name, r in obj["rows"].items()})),
        ("eval_actions.json", lambda obj: render_actions_table(
            {name: r["accuracy"] for name, r in obj["rows"].items()})),
        ("bench.json", lambda obj: render_latency_table(obj["rows"])),
    )
    for filename, renderer in sections:
        path = os.path.join(args.dir, filename)
        if not os.path.exists(path):
            continue
        found = True
        with open(path, "r", encoding="utf-8") as fh:
            obj = jsonio.loads(fh.read())
        print(f"== {filename} ==")
        print(renderer(obj), end="")
    if not found:
        raise ConfigError(f"no report artifacts found in {args.dir}")
    return EXIT_OK


# --- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecdrive",
        description="Synthetic-scene trajectory planning pipeline: generation, "
                    "QA data, training, and the open-loop evaluation battery.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file supplying defaults for any flag")
        return p

    p = add("simgen", cmd_simgen, "generate scenario datasets")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n", type=int, help="number of scenarios (default 100)")
    p.add_argument("--seed", type=int, help="generator seed (default 0)")
    p.add_argument("--suite", help="CRUISE|TURNS|HAZARD_VRU|SYMMETRIC_FORK|MIXED")
    p.add_argument("--density", type=float, help="agent density in [0,1] (default 0.5)")
    p.add_argument("--speed-min", type=float, dest="speed_min", help="min ego speed m/s")
    p.add_argument("--speed-max", type=float, dest="speed_max", help="max ego speed m/s")
    p.add_argument("--train-frac", type=float, dest="train_frac",
                   help="also write a train/eval split with this train fraction")

    p = add("qagen", cmd_qagen, "generate the ground-truth QA dataset")
    p.add_argument("--scenarios", help="scenario JSONL input")
    p.add_argument("--out", help="QA JSONL output path")

    p = add("train", cmd_train, "train the planner with a frozen oracle")
    p.add_argument("--scenarios", help="training scenario JSONL")
    p.add_argument("--out", help="output directory for checkpoint.json / loss_curve.csv")
    p.add_argument("--epochs", type=int, help="training epochs (default 50)")
    p.add_argument("--lr", type=float, help="SGD learning rate (default 1e-2)")
    p.add_argument("--seed", type=int, help="init + shuffle seed (default 7)")
    p.add_argument("--d-model", type=int, dest="d_model", help="model width (default 32)")
    p.add_argument("--n-heads", type=int, dest="n_heads", help="attention heads (default 2)")
    p.add_argument("--hidden", type=int, help="MLP hidden width (default 64)")
    p.add_argument("--oracle", help="rule | exec:CMD | tcp:HOST:PORT (default rule)")
    p.add_argument("--timeout", type=float, help="external oracle timeout seconds")

    p = add("eval-plan", cmd_eval_plan, "displacement and collision table")
    p.add_argument("--scenarios", help="evaluation scenario JSONL")
    p.add_argument("--checkpoint", help="planner checkpoint (for --predict model)")
    p.add_argument("--predict", help="model | gt (default model)")
    p.add_argument("--oracle", help="oracle endpoint supplying commands")
    p.add_argument("--timeout", type=float, help="external oracle timeout seconds")
    p.add_argument("--out", help="output directory")

    p = add("eval-text", cmd_eval_text, "explanation-quality table")
    p.add_argument("--scenarios", help="evaluation scenario JSONL")
    p.add_argument("--oracle", help="oracle under test (default rule)")
    p.add_argument("--format", help="short | long (default long)")
    p.add_argument("--timeout", type=float, help="external oracle timeout seconds")
    p.add_argument("--out", help="output directory")

    p = add("eval-actions", cmd_eval_actions, "planning accuracy vs stored labels")
    p.add_argument("--scenarios", help="evaluation scenario JSONL")
    p.add_argument("--qa", help="QA JSONL holding planning labels")
    p.add_argument("--oracle", help="oracle under test (default rule)")
    p.add_argument("--timeout", type=float, help="external oracle timeout seconds")
    p.add_argument("--out", help="output directory")

    p = add("bench-oracle", cmd_bench_oracle, "oracle latency per rationale format")
    p.add_argument("--scenarios", help="evaluation scenario JSONL")
    p.add_argument("--oracle", help="oracle to benchmark (default rule)")
    p.add_argument("--timeout", type=float, help="external oracle timeout seconds")
    p.add_argument("--warmup", type=int, help="warm-up calls excluded (default 3)")
    p.add_argument("--out", help="output directory")

    p = add("report", cmd_report, "render stored evaluation JSON as tables")
    p.add_argument("--dir", help="directory holding eval_*.json / bench.json")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _setup_logging()
        _apply_config_file(args)
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioLoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except TrainingDiverged as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except OracleError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ORACLE
    except PlannerError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
