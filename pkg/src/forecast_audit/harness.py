"""End-to-end experiment orchestration with resumable JSONL persistence.

Three experiments share one pipeline: plan cases deterministically from a
seed, render each case to PNG, submit to a critic backend (bounded
parallelism), persist every case record incrementally, then score and emit
reports. Runs are resumable: completed case_ids are replayed from the index
file, so a crashed run finishes to the same reports as an uninterrupted one.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import sys
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .basis import SeriesSpec, generate, sample_spec
from .critic import TEMPLATES, Verdict, build_prompt, critique
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    ParameterError,
    UndefinedScaleError,
    UnparseableVerdictError,
)
from .metrics import (
    REASONABLE,
    UNREASONABLE,
    Confusion,
    f1_per_class,
    mann_whitney_u,
    pct_diff,
    scrps,
    summary_stats,
    weighted_f1,
)
from .perturb import (
    filter_worst,
    random_spikes,
    smape,
    time_stretch,
    trend_modify,
    vertical_shift,
)
from .promo import SCENARIO_KINDS, build_scenario
from .render import PlotStyle, render_point, render_probabilistic
from .series import QuantileForecast, SeriesView, TimeSeries, make_grid

PERTURBATION_KINDS = ("vertical_shift", "trend_modify", "time_stretch", "random_spikes")
MIXTURE = "mixture"
EXPERIMENTS = ("perturbation", "promo", "realworld")

RECORDS_FILE = "records.jsonl"
INDEX_FILE = "index.txt"
IMAGES_DIR = "images"


def derive_seed(*parts: int) -> int:
    """Stable per-case seed from integer key parts."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1, np.uint64)[0])


@dataclass
class ExperimentConfig:
    experiment: str = "perturbation"
    seed: int = 0
    # Synthetic grid.
    t0: float = 0.0
    dt: float = 0.1
    n_points: int = 101
    split_time: float = 8.0
    # Perturbation experiment counts and parameters.
    generated: int = 334
    clean: int = 250
    worst_fraction: float = 0.75
    kinds: tuple = PERTURBATION_KINDS + (MIXTURE,)
    omega: float = 0.5
    beta: float = -3.0
    alpha: float = 3.0
    gamma: float = 0.5
    n_max: int = 3
    # Promo experiment.
    scenario_count: int = 500
    spike_scale: float = 1.5
    spike_width: int = 1
    # Realworld experiment.
    input_path: str | None = None
    # Rendering and dispatch.
    style: PlotStyle = field(default_factory=PlotStyle)
    max_parallel: int = 4

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.generated <= 0 or self.clean <= 0 or self.scenario_count <= 0:
            raise ConfigError("all case counts must be positive")
        if not 0 < self.worst_fraction <= 1:
            raise ConfigError(f"worst_fraction must be in (0, 1], got {self.worst_fraction}")
        for kind in self.kinds:
            if kind not in PERTURBATION_KINDS + (MIXTURE,):
                raise ConfigError(f"unknown perturbation kind {kind!r}")
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        if isinstance(self.kinds, list):
            self.kinds = tuple(self.kinds)

    @property
    def retained(self) -> int:
        """Perturbed cases kept per kind after the worst-fraction filter."""
        return math.floor(self.worst_fraction * self.generated)

    def make_grid(self):
        return make_grid(self.t0, self.dt, self.n_points, self.split_time)

    def to_dict(self) -> dict:
        d = {
            "experiment": self.experiment,
            "seed": self.seed,
            "t0": self.t0,
            "dt": self.dt,
            "n_points": self.n_points,
            "split_time": self.split_time,
            "generated": self.generated,
            "retained": self.retained,
            "clean": self.clean,
            "worst_fraction": self.worst_fraction,
            "kinds": list(self.kinds),
            "omega": self.omega,
            "beta": self.beta,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "n_max": self.n_max,
            "scenario_count": self.scenario_count,
            "spike_scale": self.spike_scale,
            "spike_width": self.spike_width,
            "input_path": self.input_path,
            "max_parallel": self.max_parallel,
            "style": self.style.to_dict(),
        }
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d.pop("retained", None)  # derived
        style = d.pop("style", None)
        kinds = d.pop("kinds", None)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        if style is not None:
            cfg.style = PlotStyle.from_dict(style)
        if kinds is not None:
            cfg.kinds = tuple(kinds)
        return cfg

    def apply_overrides(self, overrides: dict) -> "ExperimentConfig":
        """Flat key=value overrides; `style.<field>` reaches into the style."""
        cfg = replace(self)
        style_updates = {}
        for key, value in overrides.items():
            if key.startswith("style."):
                style_updates[key.split(".", 1)[1]] = value
            elif key == "kinds":
                cfg.kinds = tuple(value) if isinstance(value, (list, tuple)) else (value,)
            elif key in self.__dataclass_fields__:
                current = getattr(cfg, key)
                setattr(cfg, key, type(current)(value) if current is not None else value)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if style_updates:
            cfg.style = PlotStyle.from_dict({**cfg.style.to_dict(), **style_updates})
        cfg.__post_init__()
        return cfg


@dataclass
class PlannedCase:
    """One critic task: what to render, what to ask, and the ground truth."""

    case_id: str
    group: str
    arm: str  # "perturbed" | "clean" | "scenario" | "realworld"
    template_id: str
    label: str | None = None
    series: TimeSeries | None = None
    quantiles: QuantileForecast | None = None
    history: np.ndarray | None = None
    actuals: np.ndarray | None = None
    prompt_params: dict = field(default_factory=dict)
    smape: float | None = None
    scrps: float | None = None
    exclusion: str | None = None  # why the case cannot enter sCRPS statistics
    meta: dict = field(default_factory=dict)


@dataclass
class CaseRecord:
    """Persisted outcome for one case; verdict xor error after processing."""

    case_id: str
    experiment: str
    group: str
    arm: str
    label: str | None
    image: str | None
    verdict: Verdict | None = None
    error: str | None = None
    smape: float | None = None
    scrps: float | None = None
    exclusion: str | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "experiment": self.experiment,
            "group": self.group,
            "arm": self.arm,
            "label": self.label,
            "image": self.image,
            "verdict": self.verdict.to_dict() if self.verdict else None,
            "error": self.error,
            "smape": self.smape,
            "scrps": self.scrps,
            "exclusion": self.exclusion,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseRecord":
        verdict = Verdict.from_dict(d["verdict"]) if d.get("verdict") else None
        return cls(
            case_id=d["case_id"],
            experiment=d["experiment"],
            group=d["group"],
            arm=d.get("arm", ""),
            label=d.get("label"),
            image=d.get("image"),
            verdict=verdict,
            error=d.get("error"),
            smape=d.get("smape"),
            scrps=d.get("scrps"),
            exclusion=d.get("exclusion"),
            meta=d.get("meta", {}),
        )


class RunState:
    """Append-only JSONL of case records plus an index of finished case_ids."""

    def __init__(self, run_dir: Path, records_name: str = RECORDS_FILE,
                 index_name: str = INDEX_FILE):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.records_path = self.run_dir / records_name
        self.index_path = self.run_dir / index_name
        self._lock = threading.Lock()
        self.records: dict[str, CaseRecord] = {}
        self._done: set[str] = set()
        if self.index_path.exists():
            self._done = {
                line.strip()
                for line in self.index_path.read_text().splitlines()
                if line.strip()
            }
        if self.records_path.exists():
            for line in self.records_path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = CaseRecord.from_dict(json.loads(line))
                if rec.case_id in self._done:
                    self.records[rec.case_id] = rec

    def done(self, case_id: str) -> bool:
        return case_id in self._done

    def append(self, record: CaseRecord) -> None:
        with self._lock:
            with open(self.records_path, "a") as fh:
                fh.write(json.dumps(record.to_dict()) + "\n")
            with open(self.index_path, "a") as fh:
                fh.write(record.case_id + "\n")
            self.records[record.case_id] = record
            self._done.add(record.case_id)


# ---------------------------------------------------------------------------
# Case planning


def _apply_perturbation(kind: str, spec: SeriesSpec, base: TimeSeries, grid,
                        config: ExperimentConfig, spike_seed: int) -> TimeSeries:
    if kind == "vertical_shift":
        return vertical_shift(base, config.omega)
    if kind == "trend_modify":
        return trend_modify(base, config.beta)
    if kind == "time_stretch":
        return time_stretch(spec, grid, config.alpha)
    if kind == "random_spikes":
        perturbed, _ = random_spikes(base, config.gamma, config.n_max, spike_seed)
        return perturbed
    raise ParameterError(f"unknown perturbation kind {kind!r}")


@dataclass
class _Candidate:
    index: int
    ptype: str
    case: PlannedCase
    smape: float


def _filter_mixture(candidates: list[_Candidate], fraction: float, target: int) -> list[_Candidate]:
    """Worst-fraction filter applied within each perturbation type's pool,
    topped up to `target` with the next-worst discarded cases overall."""
    kept: list[_Candidate] = []
    discarded: list[_Candidate] = []
    for ptype in PERTURBATION_KINDS:
        pool = [c for c in candidates if c.ptype == ptype]
        if not pool:
            continue
        keep = filter_worst(pool, fraction, key=lambda c: c.smape)
        keep_ids = {c.index for c in keep}
        kept.extend(keep)
        discarded.extend(c for c in pool if c.index not in keep_ids)
    if len(kept) < target:
        discarded.sort(key=lambda c: (-c.smape, c.index))
        kept.extend(discarded[: target - len(kept)])
    kept.sort(key=lambda c: c.index)
    return kept[:target]


def plan_perturbation_cases(config: ExperimentConfig) -> list[PlannedCase]:
    """Deterministic case list: per kind, `generated` perturbed candidates
    filtered down to the worst `retained`, plus `clean` untouched series."""
    grid = config.make_grid()
    cases: list[PlannedCase] = []
    for kind_idx, kind in enumerate(config.kinds):
        candidates: list[_Candidate] = []
        for i in range(config.generated):
            seed = derive_seed(config.seed, kind_idx, i, 0)
            spec = sample_spec(seed)
            base = generate(spec, grid)
            if kind == MIXTURE:
                type_rng = np.random.default_rng(derive_seed(config.seed, kind_idx, i, 1))
                ptype = PERTURBATION_KINDS[int(type_rng.integers(len(PERTURBATION_KINDS)))]
            else:
                ptype = kind
            spike_seed = derive_seed(config.seed, kind_idx, i, 2)
            perturbed = _apply_perturbation(ptype, spec, base, grid, config, spike_seed)
            sm = smape(base.forecast.values, perturbed.forecast.values)
            case = PlannedCase(
                case_id=f"{kind}-pert-{i:04d}",
                group=kind,
                arm="perturbed",
                template_id="point-synthetic",
                label=UNREASONABLE,
                series=perturbed,
                smape=sm,
                meta={"spec": spec.to_dict(), "ptype": ptype},
            )
            candidates.append(_Candidate(index=i, ptype=ptype, case=case, smape=sm))
        if kind == MIXTURE:
            retained = _filter_mixture(candidates, config.worst_fraction, config.retained)
        else:
            retained = filter_worst(candidates, config.worst_fraction, key=lambda c: c.smape)
            retained.sort(key=lambda c: c.index)
        cases.extend(c.case for c in retained)
        for j in range(config.clean):
            seed = derive_seed(config.seed, kind_idx, j, 3)
            spec = sample_spec(seed)
            cases.append(
                PlannedCase(
                    case_id=f"{kind}-clean-{j:04d}",
                    group=kind,
                    arm="clean",
                    template_id="point-synthetic",
                    label=REASONABLE,
                    series=generate(spec, grid),
                    meta={"spec": spec.to_dict()},
                )
            )
    return cases


def plan_promo_cases(config: ExperimentConfig) -> list[PlannedCase]:
    grid = config.make_grid()
    cases: list[PlannedCase] = []
    for kind_idx, kind in enumerate(SCENARIO_KINDS):
        for i in range(config.scenario_count):
            spec_seed = derive_seed(config.seed, 100 + kind_idx, i, 0)
            scen_seed = derive_seed(config.seed, 100 + kind_idx, i, 1)
            spec = sample_spec(spec_seed)
            series, scenario = build_scenario(
                kind, spec, grid, scen_seed,
                spike_scale=config.spike_scale, spike_width=config.spike_width,
            )
            cases.append(
                PlannedCase(
                    case_id=f"promo-{kind}-{i:04d}",
                    group=kind,
                    arm="scenario",
                    template_id="holiday",
                    label=scenario.label,
                    series=series,
                    prompt_params={
                        "hist_holiday_t": scenario.history_holiday_t,
                        "fcst_holiday_t": scenario.forecast_holiday_t,
                    },
                    meta={"spec": spec.to_dict(), "scenario": scenario.to_dict()},
                )
            )
    return cases


@dataclass
class RealWorldCase:
    """One ingested forecast: history values, quantile paths, optional actuals."""

    series_id: str
    history: np.ndarray
    quantiles: QuantileForecast
    actuals: np.ndarray | None = None

    def __post_init__(self):
        self.history = np.asarray(self.history, dtype=float)
        if self.history.ndim != 1 or self.history.size == 0:
            raise DataError(f"history must be a non-empty vector for {self.series_id}")
        if self.actuals is not None:
            self.actuals = np.asarray(self.actuals, dtype=float)
            if self.actuals.shape != (self.quantiles.horizon,):
                raise DataError(
                    f"actuals length {self.actuals.shape} != horizon "
                    f"{self.quantiles.horizon} for {self.series_id}"
                )


def realworld_row(series_id, history, quantile_paths, actuals=None) -> dict:
    """Build one input JSONL row for the realworld experiment.

    Converter stub for daily retail demand data at product granularity: map
    `history` to the trailing observed daily sales (120 days is a typical
    window), `quantile_paths` to {level: forecast path} from the probabilistic
    forecaster over the next horizon (e.g. 28 days; levels must include
    0.1/0.5/0.9, and all nine deciles if the case should enter sCRPS
    statistics), and `actuals` to the realized sales over the same horizon
    once known.
    """
    row = {
        "id": str(series_id),
        "history": [float(v) for v in history],
        "quantiles": {
            f"{float(q):g}": [float(v) for v in path]
            for q, path in quantile_paths.items()
        },
    }
    if actuals is not None:
        row["actuals"] = [float(v) for v in actuals]
    return row


def load_realworld_cases(path) -> list[RealWorldCase]:
    """Read RealWorldCase JSONL:
    {"id": ..., "history": [...], "quantiles": {"0.1": [...], ...}, "actuals": [...]}.
    """
    cases = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            case = RealWorldCase(
                series_id=str(row["id"]),
                history=row["history"],
                quantiles=QuantileForecast.from_dict(row["quantiles"]),
                actuals=row.get("actuals"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        cases.append(case)
    return cases


def plan_realworld_cases(config: ExperimentConfig,
                         cases: list[RealWorldCase]) -> list[PlannedCase]:
    """Score each ingested case up front; cases that cannot be scored are
    still critiqued but marked excluded from sCRPS statistics."""
    planned = []
    for rw in cases:
        score = None
        exclusion = None
        if rw.actuals is None:
            exclusion = "no actuals"
        else:
            try:
                score = scrps(rw.actuals, rw.quantiles)
            except UndefinedScaleError:
                exclusion = "zero actuals scale"
            except ParameterError:
                exclusion = "missing quantile levels"
        planned.append(
            PlannedCase(
                case_id=f"rw-{rw.series_id}",
                group="realworld",
                arm="realworld",
                template_id="probabilistic-m5",
                label=None,
                quantiles=rw.quantiles,
                history=rw.history,
                actuals=rw.actuals,
                scrps=score,
                exclusion=exclusion,
                meta={"series_id": rw.series_id},
            )
        )
    return planned


# ---------------------------------------------------------------------------
# Execution


def _render_case(case: PlannedCase, style: PlotStyle) -> bytes:
    if case.quantiles is not None:
        hist_times = np.arange(len(case.history), dtype=float)
        history = SeriesView(hist_times, np.asarray(case.history, dtype=float))
        return render_probabilistic(history, case.quantiles, style)
    history, forecast = case.series.history, case.series.forecast
    return render_point(history, forecast, style)


def _critique_case(backend, case: PlannedCase, image_png: bytes,
                   experiment: str, image_rel: str) -> CaseRecord:
    prompt = build_prompt(TEMPLATES[case.template_id], **case.prompt_params)
    record = CaseRecord(
        case_id=case.case_id,
        experiment=experiment,
        group=case.group,
        arm=case.arm,
        label=case.label,
        image=image_rel,
        smape=case.smape,
        scrps=case.scrps,
        exclusion=case.exclusion,
        meta=case.meta,
    )
    try:
        record.verdict = critique(backend, image_png, prompt, case_id=case.case_id)
    except (BackendError, UnparseableVerdictError) as exc:
        record.error = f"{type(exc).__name__}: {exc}"
    return record


def process_cases(cases: list[PlannedCase], backend, config: ExperimentConfig,
                  run_dir) -> list[CaseRecord]:
    """Render, critique, and persist every case not already in the index.

    Per-case backend failures are recorded and the run continues; anything
    else propagates, leaving the on-disk state resumable.
    """
    run_dir = Path(run_dir)
    state = RunState(run_dir)
    images = run_dir / IMAGES_DIR
    images.mkdir(parents=True, exist_ok=True)

    todo = []
    for case in cases:
        if state.done(case.case_id):
            continue
        png_path = images / f"{case.case_id}.png"
        png = _render_case(case, config.style)
        png_path.write_bytes(png)
        todo.append((case, png, f"{IMAGES_DIR}/{case.case_id}.png"))

    with ThreadPoolExecutor(max_workers=config.max_parallel) as pool:
        futures = [
            pool.submit(_critique_case, backend, case, png, config.experiment, rel)
            for case, png, rel in todo
        ]
        for fut in as_completed(futures):
            state.append(fut.result())

    ordered = [state.records[c.case_id] for c in cases if c.case_id in state.records]
    return ordered


# ---------------------------------------------------------------------------
# Scoring and reports


def _group_scores(records: list[CaseRecord]) -> dict:
    scored = [r for r in records if r.verdict is not None and r.label is not None]
    errors = sum(1 for r in records if r.error is not None)
    out = {
        "n": len(records),
        "n_scored": len(scored),
        "n_errors": errors,
    }
    if not scored:
        out.update({
            "accuracy": None,
            "f1_reasonable": None,
            "f1_unreasonable": None,
            "weighted_f1": None,
        })
        return out
    labels = [r.label for r in scored]
    preds = [r.verdict.label for r in scored]
    confusion = Confusion.from_labels(labels, preds)
    f1s = f1_per_class(confusion)
    out.update({
        "accuracy": sum(1 for y, p in zip(labels, preds) if y == p) / len(scored),
        "f1_reasonable": f1s[REASONABLE],
        "f1_unreasonable": f1s[UNREASONABLE],
        "weighted_f1": weighted_f1(labels, preds),
    })
    return out


def build_report(records: list[CaseRecord], config: ExperimentConfig) -> dict:
    report = {
        "experiment": config.experiment,
        "seed": config.seed,
        "config": config.to_dict(),
        "n_cases": len(records),
        "n_errors": sum(1 for r in records if r.error is not None),
        "no_cases": len(records) == 0,
    }
    if config.experiment == "perturbation":
        groups = {}
        for kind in config.kinds:
            groups[kind] = _group_scores([r for r in records if r.group == kind])
        report["groups"] = groups
    elif config.experiment == "promo":
        groups = {}
        for kind in SCENARIO_KINDS:
            groups[kind] = _group_scores([r for r in records if r.group == kind])
        report["groups"] = groups
        scored = [r for r in records if r.verdict is not None and r.label is not None]
        report["overall_weighted_f1"] = (
            weighted_f1([r.label for r in scored], [r.verdict.label for r in scored])
            if scored else None
        )
    elif config.experiment == "realworld":
        report.update(_realworld_stats(records))
    return report


def _realworld_stats(records: list[CaseRecord]) -> dict:
    critiqued = [r for r in records if r.verdict is not None]
    excluded = [r for r in critiqued if r.scrps is None]
    scored = [r for r in critiqued if r.scrps is not None]
    r_scores = [r.scrps for r in scored if r.verdict.label == REASONABLE]
    u_scores = [r.scrps for r in scored if r.verdict.label == UNREASONABLE]
    out = {
        "n_critiqued": len(critiqued),
        "n_excluded_scoring": len(excluded),
        "exclusion_reasons": sorted({r.exclusion for r in excluded if r.exclusion}),
        "n_reasonable": len(r_scores),
        "n_unreasonable": len(u_scores),
    }
    stats_available = bool(r_scores) and bool(u_scores)
    out["stats_available"] = stats_available
    empty = {"median": None, "mean": None, "std": None}
    out["reasonable"] = summary_stats(r_scores) if r_scores else dict(empty)
    out["unreasonable"] = summary_stats(u_scores) if u_scores else dict(empty)
    if stats_available:
        out["median_r"] = out["reasonable"]["median"]
        out["median_u"] = out["unreasonable"]["median"]
        out["pct_diff_median"] = pct_diff(out["median_u"], out["median_r"])
        out["pct_diff_mean"] = pct_diff(
            out["unreasonable"]["mean"], out["reasonable"]["mean"]
        )
        test = mann_whitney_u(u_scores, r_scores)
        out["u_stat"] = test.u_stat
        out["p_value"] = test.p_value
    else:
        out.update({
            "median_r": None, "median_u": None,
            "pct_diff_median": None, "pct_diff_mean": None,
            "u_stat": None, "p_value": None,
        })
    return out


def _sanitize(obj):
    """Make a report JSON-safe: non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(report: dict, out_dir) -> dict:
    """Write report.json, report.csv and report.md. The JSON and CSV are
    byte-deterministic for identical inputs; only the Markdown carries a
    timestamp."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = _sanitize(report)

    (out_dir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )

    csv_lines = []
    md = [f"# {report['experiment']} report", ""]
    md.append(f"_generated {datetime.now(timezone.utc).isoformat()}_")
    md.append("")
    md.append(f"- seed: {report['seed']}")
    md.append(f"- cases: {report['n_cases']}")
    md.append(f"- errors: {report['n_errors']}")
    if report.get("no_cases"):
        md.append("- **no cases**")
    md.append("")

    if "groups" in report:
        header = ["group", "n", "n_scored", "n_errors", "accuracy",
                  "f1_reasonable", "f1_unreasonable", "weighted_f1"]
        csv_lines.append(",".join(header))
        md.append("| " + " | ".join(header) + " |")
        md.append("|" + "---|" * len(header))
        for group in sorted(report["groups"]):
            g = report["groups"][group]
            row = [group] + [_csv_cell(g[k]) for k in header[1:]]
            csv_lines.append(",".join(row))
            md.append("| " + " | ".join(row) + " |")
        if "overall_weighted_f1" in report:
            csv_lines.append(f"overall,,,,,,,{_csv_cell(report['overall_weighted_f1'])}")
            md.append(f"\noverall weighted F1: {report['overall_weighted_f1']}")
    else:
        fields = [
            "n_critiqued", "n_excluded_scoring", "n_reasonable", "n_unreasonable",
            "median_r", "median_u", "pct_diff_median", "pct_diff_mean",
            "u_stat", "p_value", "stats_available",
        ]
        csv_lines.append(",".join(fields))
        csv_lines.append(",".join(_csv_cell(report.get(k)) for k in fields))
        for part in ("reasonable", "unreasonable"):
            stats = report.get(part) or {}
            csv_lines.append(
                f"{part}_stats,median,{_csv_cell(stats.get('median'))},"
                f"mean,{_csv_cell(stats.get('mean'))},std,{_csv_cell(stats.get('std'))}"
            )
        md.append("| field | value |")
        md.append("|---|---|")
        for k in fields:
            md.append(f"| {k} | {report.get(k)} |")
        for part in ("reasonable", "unreasonable"):
            stats = report.get(part) or {}
            for stat_name in ("median", "mean", "std"):
                md.append(f"| {part}.{stat_name} | {stats.get(stat_name)} |")

    (out_dir / "report.csv").write_text("\n".join(csv_lines) + "\n")
    (out_dir / "report.md").write_text("\n".join(md) + "\n")
    return report


# ---------------------------------------------------------------------------
# Experiment entry points


def _echo_config(config: ExperimentConfig, run_dir) -> None:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )


def run_perturbation_experiment(config: ExperimentConfig, backend, run_dir) -> dict:
    _echo_config(config, run_dir)
    cases = plan_perturbation_cases(config)
    records = process_cases(cases, backend, config, run_dir)
    report = build_report(records, config)
    emit_report(report, run_dir)
    return report


def run_promo_experiment(config: ExperimentConfig, backend, run_dir) -> dict:
    _echo_config(config, run_dir)
    cases = plan_promo_cases(config)
    records = process_cases(cases, backend, config, run_dir)
    report = build_report(records, config)
    emit_report(report, run_dir)
    return report


def run_realworld_experiment(config: ExperimentConfig, backend, run_dir,
                             input_path=None) -> dict:
    path = input_path or config.input_path
    if not path:
        raise ConfigError("realworld experiment needs an input JSONL path")
    _echo_config(config, run_dir)
    raw_cases = load_realworld_cases(path)
    cases = plan_realworld_cases(config, raw_cases)
    records = process_cases(cases, backend, config, run_dir)
    report = build_report(records, config)
    emit_report(report, run_dir)
    return report


def run_experiment(config: ExperimentConfig, backend, run_dir) -> dict:
    runner = {
        "perturbation": run_perturbation_experiment,
        "promo": run_promo_experiment,
        "realworld": run_realworld_experiment,
    }[config.experiment]
    return runner(config, backend, run_dir)


# ---------------------------------------------------------------------------
# Human annotation


def annotate_cases(run_dir, viewer_cmd: str | None = None,
                   input_stream=None, output_stream=None,
                   records_name: str = "human_records.jsonl",
                   index_name: str = "human_index.txt") -> list[CaseRecord]:
    """Terminal labeling loop over an existing run's cases.

    Presents each rendered image (optionally opening it with `viewer_cmd`),
    reads 1 (reasonable) / 2 (unreasonable), and persists the labels in the
    regular CaseRecord schema under backend id "human" so the session can be
    scored exactly like an LLM run. Invalid keys re-prompt; EOF suspends the
    session, and a later call resumes without re-asking finished cases.
    """
    input_stream = input_stream if input_stream is not None else sys.stdin
    output_stream = output_stream if output_stream is not None else sys.stdout
    run_dir = Path(run_dir)
    base = RunState(run_dir)  # the machine run: provides cases + ground truth
    human = RunState(run_dir, records_name=records_name, index_name=index_name)
    pending = [
        rec for cid, rec in sorted(base.records.items()) if not human.done(cid)
    ]
    total = len(base.records)
    for rec in pending:
        image = run_dir / rec.image if rec.image else None
        if viewer_cmd and image is not None:
            try:
                subprocess.Popen(
                    shlex.split(viewer_cmd) + [str(image)],
                    stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL,
                )
            except OSError:
                pass  # viewer is best-effort; the path is always printed
        while True:
            output_stream.write(
                f"[{len(human.records) + 1}/{total}] {image}\n"
                "forecast reasonable (1) or unreasonable (2)? "
            )
            output_stream.flush()
            line = input_stream.readline()
            if line == "":
                output_stream.write("\nsession suspended; rerun to resume\n")
                return sorted(human.records.values(), key=lambda r: r.case_id)
            answer = line.strip()
            if answer in ("1", "2"):
                break
            output_stream.write("please answer 1 or 2\n")
        label = REASONABLE if answer == "1" else UNREASONABLE
        human.append(
            CaseRecord(
                case_id=rec.case_id,
                experiment=rec.experiment,
                group=rec.group,
                arm=rec.arm,
                label=rec.label,
                image=rec.image,
                verdict=Verdict(label=label, rationale="", raw=answer,
                                latency_ms=0, backend_id="human"),
                smape=rec.smape,
                scrps=rec.scrps,
                exclusion=rec.exclusion,
            )
        )
    return sorted(human.records.values(), key=lambda r: r.case_id)
