"""Single entry point exposing the toolkit as subcommands.

Exit codes: 0 success, 1 processing errors (per-case errors are still
persisted), 2 configuration or argument errors. Diagnostics go to stderr;
machine-readable output goes to files or stdout as documented per subcommand.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .basis import sample_spec, SeriesSpec, generate
from .critic import (
    BackendConfig,
    HttpBackend,
    ScriptedBackend,
    TEMPLATES,
    build_prompt,
    critique,
)
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    ParameterError,
    UnparseableVerdictError,
)
from .harness import ExperimentConfig, annotate_cases, build_report, emit_report
from .perturb import random_spikes, time_stretch, trend_modify, vertical_shift
from .promo import build_scenario
from .render import PlotStyle, render_point
from .series import TimeSeries, make_grid

SERIES_SCHEMA = (
    'series JSONL line: {"id": ..., "spec": {...}, '
    '"series": {"t0": ..., "dt": ..., "split_index": ..., "values": [...]}}'
)
REALWORLD_SCHEMA = (
    'realworld JSONL line: {"id": ..., "history": [...], '
    '"quantiles": {"0.1": [...], "0.5": [...], "0.9": [...]}, "actuals": [...]}'
)
SCENARIO_SCHEMA = (
    'scenario JSONL line: {"kind": ..., "hist_holiday_t": ..., "fcst_holiday_t": ..., '
    '"label": ..., "spike_magnitude": ..., "spike_width": ..., '
    '"forecast_spike_magnitude": ..., "spec": {...}, "series": {...}}'
)
SCRIPT_SCHEMA = 'mock script JSONL line: {"case_id": ..., "response": ...} ("*" = default)'


def _add_grid_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--n-points", type=int, default=101)
    p.add_argument("--split-time", type=float, default=8.0)


def _grid(args):
    return make_grid(args.t0, args.dt, args.n_points, args.split_time)


def _load_config(args) -> ExperimentConfig:
    data = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
    config = ExperimentConfig.from_dict(data) if data else ExperimentConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        overrides[key] = value
    if getattr(args, "experiment", None):
        overrides["experiment"] = args.experiment
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "input", None):
        overrides["input_path"] = args.input
    return config.apply_overrides(overrides)


def _make_backend(args):
    if args.backend == "mock":
        if not args.script:
            raise ConfigError("--backend mock needs --script (see schema in --help)")
        return ScriptedBackend.from_jsonl(args.script)
    cfg = BackendConfig(
        endpoint=args.endpoint or "",
        model=args.model or "",
        auth_env=args.auth_env,
        timeout_s=args.timeout_s,
        max_retries=args.max_retries,
        max_parallel=args.max_parallel or 4,
    )
    return HttpBackend(cfg)


def _add_backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--script", help=f"mock response script; {SCRIPT_SCHEMA}")
    p.add_argument("--endpoint", help="HTTP backend URL")
    p.add_argument("--model", help="model identifier sent to the endpoint")
    p.add_argument("--auth-env", default="FORECAST_AUDIT_API_KEY",
                   help="environment variable holding the API key")
    p.add_argument("--timeout-s", type=float, default=60.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--max-parallel", type=int, default=None,
                   help="bounded request parallelism (default: config value)")


def cmd_generate(args) -> int:
    grid = _grid(args)
    with open(args.out, "w") as fh:
        for i in range(args.count):
            seed = harness.derive_seed(args.seed, i)
            spec = sample_spec(seed)
            series = generate(spec, grid)
            fh.write(json.dumps({
                "id": f"gen-{i:04d}",
                "spec": spec.to_dict(),
                "series": series.to_dict(),
            }) + "\n")
    return 0


def cmd_perturb(args) -> int:
    rows = [json.loads(l) for l in Path(args.input).read_text().splitlines() if l.strip()]
    with open(args.out, "w") as fh:
        for i, row in enumerate(rows):
            series = TimeSeries.from_dict(row["series"])
            if args.kind == "vertical_shift":
                perturbed = vertical_shift(series, args.omega)
            elif args.kind == "trend_modify":
                perturbed = trend_modify(series, args.beta)
            elif args.kind == "time_stretch":
                spec = SeriesSpec.from_dict(row["spec"])
                perturbed = time_stretch(spec, series.grid, args.alpha)
            else:
                seed = harness.derive_seed(args.seed, i)
                perturbed, _ = random_spikes(series, args.gamma, args.n_max, seed)
            out_row = dict(row)
            out_row["series"] = perturbed.to_dict()
            out_row["perturbation"] = args.kind
            fh.write(json.dumps(out_row) + "\n")
    return 0


def cmd_scenario(args) -> int:
    grid = _grid(args)
    with open(args.out, "w") as fh:
        for i in range(args.count):
            spec = sample_spec(harness.derive_seed(args.seed, i, 0))
            series, scenario = build_scenario(
                args.kind, spec, grid, harness.derive_seed(args.seed, i, 1),
                spike_scale=args.spike_scale, spike_width=args.spike_width,
            )
            row = scenario.to_dict()
            row["spec"] = spec.to_dict()
            row["series"] = series.to_dict()
            fh.write(json.dumps(row) + "\n")
    return 0


def cmd_render(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    style = PlotStyle(test_mode=args.test_mode)
    for i, line in enumerate(Path(args.input).read_text().splitlines()):
        if not line.strip():
            continue
        row = json.loads(line)
        series = TimeSeries.from_dict(row["series"])
        png = render_point(series.history, series.forecast, style)
        case_id = row.get("id", f"case-{i:04d}")
        (out_dir / f"{case_id}.png").write_bytes(png)
    return 0


def cmd_critique(args) -> int:
    backend = _make_backend(args)
    params = {}
    if args.hist_t is not None:
        params["hist_holiday_t"] = args.hist_t
    if args.fcst_t is not None:
        params["fcst_holiday_t"] = args.fcst_t
    prompt = build_prompt(TEMPLATES[args.template], **params)
    image = Path(args.image).read_bytes()
    try:
        verdict = critique(backend, image, prompt, case_id=args.case_id)
    except (BackendError, UnparseableVerdictError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(verdict.to_dict()))
    return 0


def cmd_run(args) -> int:
    config = _load_config(args)
    if config.experiment == "realworld" and not config.input_path:
        raise ConfigError("realworld experiment needs --input with a JSONL file "
                          f"({REALWORLD_SCHEMA})")
    backend = _make_backend(args)
    if args.max_parallel is not None:
        config.max_parallel = args.max_parallel
    report = harness.run_experiment(config, backend, args.out)
    print(json.dumps({"out": str(args.out), "n_cases": report["n_cases"],
                      "n_errors": report["n_errors"]}))
    return 1 if report["n_errors"] else 0


def cmd_annotate(args) -> int:
    annotate_cases(args.run, viewer_cmd=args.viewer)
    return 0


def cmd_report(args) -> int:
    run_dir = Path(args.run)
    state = harness.RunState(run_dir, records_name=args.records)
    config_path = run_dir / "config.json"
    if config_path.exists():
        config = ExperimentConfig.from_dict(json.loads(config_path.read_text()))
    else:
        records = list(state.records.values())
        experiment = records[0].experiment if records else "perturbation"
        config = ExperimentConfig(experiment=experiment)
    records = sorted(state.records.values(), key=lambda r: r.case_id)
    report = build_report(records, config)
    emit_report(report, run_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="forecast-audit",
        description="Generate, perturb, render, critique and score forecasts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample synthetic series to JSONL",
                       epilog=SERIES_SCHEMA)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--out", required=True)
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("perturb", help="apply one perturbation to a series file",
                       epilog=SERIES_SCHEMA)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", required=True,
                   choices=harness.PERTURBATION_KINDS)
    p.add_argument("--omega", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=-3.0)
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--n-max", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_perturb)

    p = sub.add_parser("scenario", help="build promotional-holiday cases",
                       epilog=SCENARIO_SCHEMA)
    p.add_argument("--kind", required=True, choices=("A", "B", "C", "D"))
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--spike-scale", type=float, default=1.5)
    p.add_argument("--spike-width", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_grid_flags(p)
    p.set_defaults(fn=cmd_scenario)

    p = sub.add_parser("render", help="render series JSONL to PNG files",
                       epilog=SERIES_SCHEMA)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--test-mode", action="store_true",
                   help="suppress text for byte-deterministic output")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("critique", help="ask the critic about one image")
    p.add_argument("--image", required=True)
    p.add_argument("--template", default="point-synthetic",
                   choices=sorted(TEMPLATES))
    p.add_argument("--case-id", default="cli-case")
    p.add_argument("--hist-t", type=float, help="history holiday time (holiday template)")
    p.add_argument("--fcst-t", type=float, help="forecast holiday time (holiday template)")
    _add_backend_flags(p)
    p.set_defaults(fn=cmd_critique)

    p = sub.add_parser("run", help="run a full experiment",
                       epilog=f"{REALWORLD_SCHEMA}\n{SCRIPT_SCHEMA}")
    p.add_argument("--experiment", choices=harness.EXPERIMENTS)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="flat config override, applied after the config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--input", help="realworld cases JSONL")
    p.add_argument("--out", required=True, help="run directory")
    _add_backend_flags(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("annotate", help="label a run's images by hand")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--viewer", help="command used to open each image")
    p.set_defaults(fn=cmd_annotate)

    p = sub.add_parser("report", help="rebuild reports from persisted records")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--records", default=harness.RECORDS_FILE,
                   help="records file inside the run directory")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ParameterError, ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
