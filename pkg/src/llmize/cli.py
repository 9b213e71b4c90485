"""Command-line front end: configured runs, built-in benchmarks, and plots.

Exit codes: 0 for a completed run, 1 for usage or configuration errors,
2 for an aborted run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import subprocess
import sys
from pathlib import Path
from typing import Sequence

from . import benchmarks as bench_mod
from .benchmarks import Benchmark, SeedStyle, seed_samples
from .control import Callback, adaptive_sampling, early_stopping, target_stop
from .core import (
    EvaluatedSolution,
    KeyedScalars,
    KeyedScalarsSchema,
    ObjectiveDirection,
    OptimizationResult,
    Permutation,
    PermutationSchema,
    ProblemSpec,
    RealVector,
    RealVectorSchema,
    SolutionSchema,
    SolutionValue,
    TerminationKind,
)
from .evaluation import EvalPolicy, EvaluationFailed, Objective, evaluate_batch
from .optimizers import RunConfig, SaState, run_hlmea, run_hlmsa, run_opro
from .proposer import (
    HttpChatBackend,
    PerturbBackend,
    SamplingParams,
    ScriptedBackend,
    Strategy,
    render_solution,
)
from .svg import render_history_chart, render_tour

HISTORY_CSV_HEADER = (
    "step_index,best_of_step,mean_of_step,best_so_far,"
    "sampling_temperature,sa_temperature,cooling_rate"
)

_RUNNERS = {
    Strategy.OPRO: run_opro,
    Strategy.HLMEA: run_hlmea,
    Strategy.HLMSA: run_hlmsa,
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Result serialization
# ---------------------------------------------------------------------------


def solution_to_jsonable(value: SolutionValue) -> dict:
    if isinstance(value, RealVector):
        return {"kind": "real_vector", "values": list(value.values)}
    if isinstance(value, Permutation):
        return {"kind": "permutation", "order": list(value.order)}
    if isinstance(value, KeyedScalars):
        return {"kind": "keyed_scalars", "pairs": value.as_dict()}
    raise TypeError(f"unknown solution value: {value!r}")


def result_to_jsonable(result: OptimizationResult) -> dict:
    # wall_time is intentionally left out: result.json must be byte-identical
    # across reruns with the same seed.
    return {
        "best": {
            "solution": solution_to_jsonable(result.best.solution),
            "score": result.best.score,
        },
        "steps": [
            {
                "step_index": s.step_index,
                "best_of_step": s.best_of_step,
                "mean_of_step": s.mean_of_step,
                "best_so_far": s.best_so_far,
                "sampling_temperature": s.sampling_temperature,
                "sa_temperature": s.sa_temperature,
                "cooling_rate": s.cooling_rate,
                "hyperparams": s.hyperparams,
            }
            for s in result.steps
        ],
        "termination": {
            "kind": result.termination.kind.value,
            "message": result.termination.message,
        },
        "evaluations_used": result.evaluations_used,
        "proposer_calls": result.proposer_calls,
    }


def dumps_result(result: OptimizationResult) -> str:
    return json.dumps(result_to_jsonable(result), sort_keys=True, indent=2) + "\n"


def _csv_cell(value: float | None) -> str:
    return "" if value is None else repr(value)


def dumps_history_csv(result: OptimizationResult) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(HISTORY_CSV_HEADER.split(","))
    for s in result.steps:
        writer.writerow(
            [
                s.step_index,
                repr(s.best_of_step),
                repr(s.mean_of_step),
                repr(s.best_so_far),
                repr(s.sampling_temperature),
                _csv_cell(s.sa_temperature),
                _csv_cell(s.cooling_rate),
            ]
        )
    return out.getvalue()


def read_history_csv(path: Path) -> list[dict[str, float]]:
    """Parse a history CSV back into chart rows, strictly."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("empty CSV") from None
        if header != HISTORY_CSV_HEADER.split(","):
            raise ConfigError(
                f"header mismatch: expected {HISTORY_CSV_HEADER!r}, got {','.join(header)!r}"
            )
        rows: list[dict[str, float]] = []
        for lineno, raw in enumerate(reader, start=2):
            try:
                if len(raw) != 7:
                    raise ValueError(f"expected 7 fields, got {len(raw)}")
                rows.append(
                    {
                        "step_index": int(raw[0]),
                        "best_of_step": float(raw[1]),
                        "mean_of_step": float(raw[2]),
                        "best_so_far": float(raw[3]),
                        "sampling_temperature": float(raw[4]),
                    }
                )
            except ValueError as exc:
                raise ConfigError(f"row {lineno}: {exc}") from None
    if not rows:
        raise ConfigError("no data rows")
    return rows


# ---------------------------------------------------------------------------
# Config file parsing (strict: unknown keys are rejected by name)
# ---------------------------------------------------------------------------


def _line_of(raw: str, key: str) -> str:
    for i, line in enumerate(raw.splitlines(), start=1):
        if f'"{key}"' in line:
            return f" (line {i})"
    return ""


def _check_keys(obj: dict, allowed: set[str], path: str, raw: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    for key in obj:
        if key not in allowed:
            where = f" in {path}" if path else ""
            raise ConfigError(f"unknown key '{key}'{where}{_line_of(raw, key)}")


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        where = f" in {path}" if path else ""
        raise ConfigError(f"missing required key '{key}'{where}")
    return obj[key]


def _parse_direction(value: str) -> ObjectiveDirection:
    try:
        return ObjectiveDirection(value)
    except ValueError:
        raise ConfigError(
            f"direction must be 'minimize' or 'maximize', got {value!r}"
        ) from None


def _parse_schema(obj: dict, raw: str) -> SolutionSchema:
    _check_keys(obj, {"kind", "lower", "upper", "n", "bounds"}, "problem.schema", raw)
    kind = _require(obj, "kind", "problem.schema")
    if kind == "real_vector":
        lower = _require(obj, "lower", "problem.schema")
        upper = _require(obj, "upper", "problem.schema")
        return RealVectorSchema(dim=len(lower), lower=tuple(lower), upper=tuple(upper))
    if kind == "permutation":
        return PermutationSchema(n=int(_require(obj, "n", "problem.schema")))
    if kind == "keyed_scalars":
        bounds = _require(obj, "bounds", "problem.schema")
        return KeyedScalarsSchema.from_bounds(
            {str(k): (float(v[0]), float(v[1])) for k, v in bounds.items()}
        )
    raise ConfigError(f"unknown schema kind {kind!r}")


def command_objective(
    command: list[str], direction: ObjectiveDirection, name: str = "external"
) -> Objective:
    """Objective that shells out per candidate: rendered solution on stdin,
    one real number expected on stdout."""

    def evaluate(value: SolutionValue) -> float:
        proc = subprocess.run(
            command,
            input=render_solution(value),
            capture_output=True,
            text=True,
        )
        if proc.returncode != 0:
            raise RuntimeError(
                f"objective command exited {proc.returncode}: {proc.stderr.strip()}"
            )
        return float(proc.stdout.strip())

    return Objective(evaluate=evaluate, direction=direction, name=name)


def _parse_backend(obj: dict, raw: str):
    _check_keys(
        obj,
        {"kind", "seed", "step_scale", "transcript", "base_url", "model", "api_key", "timeout"},
        "backend",
        raw,
    )
    kind = _require(obj, "kind", "backend")
    if kind == "perturb":
        return PerturbBackend(
            seed=int(_require(obj, "seed", "backend")),
            step_scale=float(obj.get("step_scale", 0.1)),
        )
    if kind == "scripted":
        transcript_path = Path(_require(obj, "transcript", "backend"))
        try:
            transcripts = json.loads(transcript_path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read transcript: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"transcript is not valid JSON: {exc}") from None
        if not isinstance(transcripts, list) or not all(
            isinstance(t, str) for t in transcripts
        ):
            raise ConfigError("transcript must be a JSON array of strings")
        return ScriptedBackend(transcripts)
    if kind == "http":
        return HttpChatBackend(
            base_url=obj.get("base_url"),
            model=str(_require(obj, "model", "backend")),
            api_key=obj.get("api_key"),
            timeout=float(obj.get("timeout", 60.0)),
        )
    raise ConfigError(f"unknown backend kind {kind!r}")


def _parse_callbacks(obj: dict, raw: str) -> list[Callback]:
    _check_keys(
        obj, {"early_stopping", "target_stop", "adaptive_sampling"}, "callbacks", raw
    )
    callbacks: list[Callback] = []
    if "early_stopping" in obj:
        block = obj["early_stopping"]
        _check_keys(block, {"patience", "min_delta"}, "callbacks.early_stopping", raw)
        callbacks.append(
            early_stopping(
                patience=int(_require(block, "patience", "callbacks.early_stopping")),
                min_delta=float(block.get("min_delta", 0.0)),
            )
        )
    if "target_stop" in obj:
        block = obj["target_stop"]
        _check_keys(block, {"target"}, "callbacks.target_stop", raw)
        callbacks.append(
            target_stop(float(_require(block, "target", "callbacks.target_stop")))
        )
    if "adaptive_sampling" in obj:
        block = obj["adaptive_sampling"]
        _check_keys(
            block,
            {"stagnation_window", "bump", "ceiling"},
            "callbacks.adaptive_sampling",
            raw,
        )
        callbacks.append(
            adaptive_sampling(
                stagnation_window=int(
                    _require(block, "stagnation_window", "callbacks.adaptive_sampling")
                ),
                bump=float(_require(block, "bump", "callbacks.adaptive_sampling")),
                ceiling=float(block.get("ceiling", 2.0)),
            )
        )
    return callbacks


_TOP_KEYS = {
    "strategy",
    "benchmark",
    "benchmark_params",
    "problem",
    "backend",
    "max_steps",
    "batch",
    "history_capacity",
    "workers",
    "rng_seed",
    "sampling",
    "seeding",
    "callbacks",
    "sa",
    "output_dir",
}


def _load_run_file(path: Path):
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    _check_keys(doc, _TOP_KEYS, "", raw)

    try:
        strategy = Strategy(_require(doc, "strategy", ""))
    except ValueError:
        raise ConfigError(
            f"strategy must be one of opro, hlmea, hlmsa; got {doc['strategy']!r}"
        ) from None

    if ("benchmark" in doc) == ("problem" in doc):
        raise ConfigError("exactly one of 'benchmark' or 'problem' is required")

    rng_seed = int(doc.get("rng_seed", 0))
    benchmark: Benchmark | None = None
    if "benchmark" in doc:
        params = doc.get("benchmark_params", {})
        _check_keys(params, {"n", "seed"}, "benchmark_params", raw)
        if params and doc["benchmark"] != "tsp":
            raise ConfigError("benchmark_params only applies to the tsp benchmark")
        try:
            if doc["benchmark"] == "tsp":
                benchmark = bench_mod.get_benchmark(
                    "tsp",
                    n=int(params.get("n", 10)),
                    instance_seed=int(params.get("seed", rng_seed)),
                )
            else:
                benchmark = bench_mod.get_benchmark(doc["benchmark"])
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        spec = benchmark.spec
        objective = benchmark.objective
    else:
        problem = doc["problem"]
        _check_keys(
            problem,
            {"description", "direction", "schema", "domain_knowledge", "objective_command"},
            "problem",
            raw,
        )
        direction = _parse_direction(_require(problem, "direction", "problem"))
        schema = _parse_schema(_require(problem, "schema", "problem"), raw)
        command = _require(problem, "objective_command", "problem")
        if not isinstance(command, list) or not command:
            raise ConfigError("problem.objective_command must be a non-empty array")
        spec = ProblemSpec(
            description=str(_require(problem, "description", "problem")),
            direction=direction,
            schema=schema,
            domain_knowledge=problem.get("domain_knowledge"),
        )
        objective = command_objective([str(c) for c in command], direction)

    backend = _parse_backend(_require(doc, "backend", ""), raw)

    sampling_doc = doc.get("sampling", {})
    _check_keys(
        sampling_doc, {"model_temperature", "max_output_tokens", "seed"}, "sampling", raw
    )
    sampling = SamplingParams(
        model_temperature=float(sampling_doc.get("model_temperature", 1.0)),
        max_output_tokens=int(sampling_doc.get("max_output_tokens", 2048)),
        seed=sampling_doc.get("seed"),
    )

    config = RunConfig(
        max_steps=int(doc.get("max_steps", 50)),
        batch=int(doc.get("batch", 8)),
        history_capacity=int(doc.get("history_capacity", 16)),
        sampling=sampling,
        workers=int(doc.get("workers", 1)),
        rng_seed=rng_seed,
    )

    seeding_doc = doc.get("seeding", {})
    _check_keys(seeding_doc, {"style", "count", "seed"}, "seeding", raw)
    if benchmark is not None:
        style = benchmark.seed_style
        count = benchmark.seed_count
    else:
        if "style" not in seeding_doc:
            raise ConfigError("seeding.style is required for custom problems")
        style = None
        count = int(seeding_doc.get("count", config.batch))
    if "style" in seeding_doc:
        styles = {"grid": SeedStyle.GRID, "uniform": SeedStyle.UNIFORM_RANDOM}
        if seeding_doc["style"] not in styles:
            raise ConfigError("seeding.style must be 'grid' or 'uniform'")
        style = styles[seeding_doc["style"]]
    if "count" in seeding_doc:
        count = int(seeding_doc["count"])
    seed_seed = int(seeding_doc.get("seed", rng_seed))
    seeds = seed_samples(spec.schema, count, seed_seed, style)

    callbacks = _parse_callbacks(doc.get("callbacks", {}), raw)

    sa_doc = doc.get("sa", {})
    _check_keys(
        sa_doc, {"initial_temperature", "cooling_bounds", "default_cooling"}, "sa", raw
    )
    if sa_doc and strategy is not Strategy.HLMSA:
        raise ConfigError("'sa' settings only apply to the hlmsa strategy")
    sa_init = None
    if strategy is Strategy.HLMSA:
        sa_init = SaState(
            sa_temperature=float(sa_doc.get("initial_temperature", 1.0)),
            cooling_bounds=tuple(sa_doc.get("cooling_bounds", (0.5, 0.99))),
            default_cooling=float(sa_doc.get("default_cooling", 0.92)),
        )

    out_dir = Path(doc.get("output_dir", "."))
    return strategy, spec, objective, backend, config, callbacks, seeds, sa_init, out_dir, benchmark


# ---------------------------------------------------------------------------
# Run execution shared by `run` and `bench`
# ---------------------------------------------------------------------------


def _execute(
    strategy: Strategy,
    spec: ProblemSpec,
    objective: Objective,
    backend,
    config: RunConfig,
    callbacks: Sequence[Callback],
    seeds: Sequence[SolutionValue],
    sa_init: SaState | None,
    out_dir: Path,
    benchmark: Benchmark | None,
) -> int:
    policy = EvalPolicy(workers=config.workers)
    try:
        scores = evaluate_batch(objective, list(seeds), policy)
    except EvaluationFailed as exc:
        print(f"aborted while evaluating initial samples: {exc}", file=sys.stderr)
        return 2
    initial = [EvaluatedSolution(v, s) for v, s in zip(seeds, scores)]

    if strategy is Strategy.HLMSA:
        result = run_hlmsa(spec, objective, backend, config, callbacks, initial, sa_init)
    else:
        result = _RUNNERS[strategy](spec, objective, backend, config, callbacks, initial)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "result.json").write_text(dumps_result(result))
    (out_dir / "history.csv").write_text(dumps_history_csv(result))
    if result.steps:
        rows = [
            {
                "step_index": s.step_index,
                "best_of_step": s.best_of_step,
                "mean_of_step": s.mean_of_step,
                "best_so_far": s.best_so_far,
            }
            for s in result.steps
        ]
        (out_dir / "plot.svg").write_text(render_history_chart(rows))
    if (
        benchmark is not None
        and benchmark.tsp_instance is not None
        and isinstance(result.best.solution, Permutation)
    ):
        (out_dir / "tour.svg").write_text(
            render_tour(benchmark.tsp_instance, result.best.solution)
        )

    print(
        f"best={result.best.score!r} steps={len(result.steps)} "
        f"termination={result.termination.kind.value}"
    )
    return 2 if result.termination.kind is TerminationKind.ABORTED else 0


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(config_path: str) -> int:
    path = Path(config_path)
    try:
        parts = _load_run_file(path)
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"config error in {path}: {exc}", file=sys.stderr)
        return 1
    return _execute(*parts)


def _bench_defaults(name: str, seed: int, n: int) -> tuple[Benchmark, int, float | None]:
    if name == "convex2d":
        return bench_mod.get_benchmark("convex2d"), 60, 7.95
    if name == "lp3":
        return bench_mod.get_benchmark("lp3"), 110, 40.5
    if name == "tsp":
        return bench_mod.get_benchmark("tsp", n=n, instance_seed=seed), 250, None
    raise KeyError(name)


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        benchmark, default_steps, target = _bench_defaults(args.name, args.seed, args.n)
    except KeyError:
        print(
            f"unknown benchmark {args.name!r}; known: {', '.join(bench_mod.BENCHMARK_NAMES)}",
            file=sys.stderr,
        )
        return 1
    strategy = Strategy(args.strategy)
    try:
        config = RunConfig(
            max_steps=args.max_steps or default_steps,
            batch=args.batch,
            history_capacity=args.history_capacity,
            sampling=SamplingParams(),
            workers=1,
            rng_seed=args.seed,
        )
        if args.http_model:
            backend = HttpChatBackend(base_url=args.http_base_url, model=args.http_model)
        else:
            backend = PerturbBackend(seed=args.seed, step_scale=args.step_scale)
    except ValueError as exc:
        print(f"invalid benchmark options: {exc}", file=sys.stderr)
        return 1
    callbacks: list[Callback] = []
    if target is not None:
        callbacks.append(target_stop(target))
    seeds = seed_samples(
        benchmark.spec.schema, benchmark.seed_count, args.seed, benchmark.seed_style
    )
    sa_init = SaState() if strategy is Strategy.HLMSA else None
    return _execute(
        strategy,
        benchmark.spec,
        benchmark.objective,
        backend,
        config,
        callbacks,
        seeds,
        sa_init,
        Path(args.out),
        benchmark,
    )


def cmd_plot(history_csv: str, out_svg: str) -> int:
    try:
        rows = read_history_csv(Path(history_csv))
    except ConfigError as exc:
        print(f"bad history CSV {history_csv}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"cannot read {history_csv}: {exc}", file=sys.stderr)
        return 1
    Path(out_svg).write_text(render_history_chart(rows))
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llmize",
        description="Run model-guided black-box optimizations and plot their progress.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run described by a JSON config file")
    p_run.add_argument("config", help="path to the run config (JSON)")

    p_bench = sub.add_parser("bench", help="run a built-in benchmark")
    p_bench.add_argument("name", help="benchmark name")
    p_bench.add_argument(
        "--strategy", choices=[s.value for s in Strategy], default="opro"
    )
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--n", type=int, default=10, help="tsp city count")
    p_bench.add_argument("--max-steps", type=int, default=None)
    p_bench.add_argument("--batch", type=int, default=8)
    p_bench.add_argument("--history-capacity", type=int, default=16)
    p_bench.add_argument("--step-scale", type=float, default=0.1)
    p_bench.add_argument("--http-model", default=None, help="use the HTTP backend with this model")
    p_bench.add_argument("--http-base-url", default=None)
    p_bench.add_argument("--out", default=".", help="output directory")

    p_plot = sub.add_parser("plot", help="render a history CSV as an SVG chart")
    p_plot.add_argument("history_csv")
    p_plot.add_argument("out_svg")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.config)
    if args.command == "bench":
        return cmd_bench(args)
    if args.command == "plot":
        return cmd_plot(args.history_csv, args.out_svg)
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
