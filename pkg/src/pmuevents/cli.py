"""Command-line pipeline: simulate, detect, analyze.

Exit codes are a stable contract: 0 success, 2 input/config error, 3 IO
failure. Every command writes a manifest.json listing each output file
with its sha256 digest; manifests carry no timestamps, so identical inputs
and seeds reproduce byte-identical output trees.

The single JSON config file has sections:

    {"scenario": {...},   # cmd_simulate; see simulate.scenario_from_dict
     "detect":   {...},   # optional flag defaults for cmd_detect
     "analyze":  {...}}   # optional flag defaults for cmd_analyze
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .characterize import (
    extract_features,
    fit_power_law,
    grid_response_report,
    production_histogram,
)
from .detect import (
    detect_events,
    detect_events_baseline,
    events_from_jsonl,
    events_to_jsonl,
    load_model,
)
from .dynamics import segment_stages, segmentation_record
from .errors import (
    ConfigError,
    DomainError,
    FormatError,
    InsufficientDataError,
    PmuEventsError,
)
from .io import align, parse_stream
from .locate import (
    Origin,
    classify_origin,
    combined_origin,
    differential_phasor,
    origin_record,
    signature_match,
)
from .phasors import DEFAULT_RATE, DEFAULT_RATED_POWER
from .simulate import scenario_from_dict, simulate, write_labeled_stream

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_IO = 3


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _write_manifest(out_dir: Path, command: str, inputs: dict, outputs: list[Path], extra: dict):
    manifest = {
        "format": "pmuevents-manifest",
        "version": 1,
        "command": command,
        "package_version": __version__,
        "inputs": {name: _sha256(Path(p)) for name, p in inputs.items()},
        "outputs": {p.name: _sha256(p) for p in outputs},
    }
    manifest.update(extra)
    _write_json(out_dir / "manifest.json", manifest)


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config root must be a JSON object")
    return payload


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    if "scenario" not in config:
        raise ConfigError("config lacks a 'scenario' section")
    scenario = scenario_from_dict(config["scenario"])
    labeled = simulate(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_labeled_stream(labeled, out)
    _write_manifest(
        out,
        "simulate",
        inputs={"config": args.config},
        outputs=list(paths.values()),
        extra={"seed": scenario.seed, "config_sha256": _sha256(Path(args.config))},
    )
    return EXIT_OK


def cmd_detect(args) -> int:
    defaults = _load_config(args.config).get("detect", {})
    stream, report = parse_stream(
        args.stream, Path(args.stream).stem,
        rated_power=args.rated_power, nominal_rate=args.nominal_rate,
    )
    if args.baseline:
        events = detect_events_baseline(
            stream,
            z_threshold=args.z_threshold if args.z_threshold is not None else defaults.get("z_threshold", 5.0),
            window=args.window if args.window is not None else defaults.get("window", 121),
            min_separation=args.min_separation
            if args.min_separation is not None
            else defaults.get("min_separation", 0.5),
        )
    else:
        if args.model is None:
            raise ConfigError("either --model or --baseline is required")
        model = load_model(args.model)
        events = detect_events(
            stream,
            model,
            threshold_quantile=args.threshold_quantile
            if args.threshold_quantile is not None
            else defaults.get("threshold_quantile", 0.995),
            min_separation=args.min_separation
            if args.min_separation is not None
            else defaults.get("min_separation", 0.5),
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    events_path = out / "events.jsonl"
    events_to_jsonl(events, events_path)
    inputs = {"stream": args.stream}
    if args.model:
        inputs["model"] = args.model
    _write_manifest(
        out,
        "detect",
        inputs=inputs,
        outputs=[events_path],
        extra={"n_events": len(events), "dropped_rows": report.n_dropped},
    )
    return EXIT_OK


def _analyze_event(k, event, pairs, solar_stream, opts, warnings):
    """One event through locate + characterize; returns rows for reports."""
    event_id = f"ev{k:04d}"
    dp = None
    label = None
    try:
        dp = differential_phasor(event, current_floor=opts["current_floor"])
    except PmuEventsError as exc:
        warnings.append(f"{event_id}: {exc}")
    if dp is not None:
        if pairs is not None:
            try:
                label = combined_origin(
                    event, dp, pairs,
                    dead_band=opts["dead_band"], corr_threshold=opts["corr_threshold"],
                )
            except InsufficientDataError as exc:
                warnings.append(f"{event_id}: signature inspection unavailable ({exc})")
        if label is None:
            label = classify_origin(dp, dead_band=opts["dead_band"])

    feature = None
    if dp is not None and label is not None:
        try:
            feature = extract_features(
                event, dp, label,
                rated_power=solar_stream.rated_power, event_id=event_id,
            )
        except PmuEventsError as exc:
            warnings.append(f"{event_id}: {exc}")

    stage = None
    if label is not None and label.origin is Origin.GRID_INDUCED:
        lead_us = int(0.5e6)
        horizon_us = int(opts["recovery_horizon_s"] * 1e6)
        trace = solar_stream.slice_us(event.start_us - lead_us, event.end_us + horizon_us)
        try:
            stage = segment_stages(event, trace)
        except PmuEventsError as exc:
            warnings.append(f"{event_id}: {exc}")

    response = None
    if label is not None and label.origin is Origin.GRID_INDUCED and pairs is not None:
        try:
            response = grid_response_report(
                event,
                [p.solar for p in pairs],
                [p.auxiliary for p in pairs],
                persist_s=opts["persist_s"],
            )
        except InsufficientDataError as exc:
            warnings.append(f"{event_id}: response comparison unavailable ({exc})")

    return event_id, label, feature, stage, response


def _fit_or_none(x, y, with_offset, warnings, tag):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = x > 0
    min_pts = 4 if with_offset else 3
    if keep.sum() < min_pts:
        return None
    try:
        fit = fit_power_law(x[keep], y[keep], with_offset=with_offset)
    except PmuEventsError as exc:
        warnings.append(f"fit {tag}: {exc}")
        return None
    return {
        "model_kind": fit.model_kind,
        "params": list(fit.params),
        "rmse": fit.rmse,
        "n_points": fit.n_points,
    }


def cmd_analyze(args) -> int:
    section = _load_config(args.config).get("analyze", {})
    opts = {
        "dead_band": section.get("dead_band", 0.1),
        "current_floor": section.get("current_floor", 0.01),
        "corr_threshold": section.get("corr_threshold", 0.8),
        "persist_s": section.get("persist_s", 2.0),
        "recovery_horizon_s": section.get("recovery_horizon_s", 4.0),
        "bin_width_pct": section.get("bin_width_pct", 10.0),
        "production_threshold_pct": section.get("production_threshold_pct", 30.0),
    }
    solar, _ = parse_stream(
        args.solar, Path(args.solar).stem,
        rated_power=args.rated_power, nominal_rate=args.nominal_rate,
    )
    pairs = None
    if args.aux:
        aux, _ = parse_stream(
            args.aux, Path(args.aux).stem,
            rated_power=args.rated_power, nominal_rate=args.nominal_rate,
        )
        pairs = align(solar, aux)
    events = events_from_jsonl(args.events, solar)

    warnings: list[str] = []
    origin_rows, feature_rows, stage_rows = [], [], []
    features, responses = [], []
    for k, event in enumerate(events):
        event_id, label, feature, stage, response = _analyze_event(
            k, event, pairs, solar, opts, warnings
        )
        if label is not None:
            origin_rows.append(origin_record(event_id, label))
        if feature is not None:
            features.append(feature)
            feature_rows.append(
                {
                    "event_id": event_id,
                    "origin": feature.origin.origin.value,
                    "production_pct": feature.production_pct,
                    "d_angle": feature.d_angle,
                    "d_pf": feature.d_pf,
                    "real_z": feature.real_z,
                }
            )
        if stage is not None:
            stage_rows.append(segmentation_record(event_id, stage))
        if response is not None:
            responses.append(
                {
                    "event_id": event_id,
                    "solar": vars(response.solar),
                    "auxiliary": vars(response.auxiliary),
                    "opposite_current_directions": response.opposite_current_directions,
                }
            )

    if events and not origin_rows:
        print("analyze: every event failed; see warnings", file=sys.stderr)
        for w in warnings:
            print(f"  {w}", file=sys.stderr)
        return EXIT_INPUT

    local = [f for f in features if f.origin.origin is Origin.LOCALLY_INDUCED]
    hist = production_histogram(
        features, opts["bin_width_pct"], origin_filter=Origin.LOCALLY_INDUCED
    )
    fits = {
        "real_z_vs_production": _fit_or_none(
            [f.production_pct for f in local],
            [f.real_z for f in local],
            True,
            warnings,
            "real_z_vs_production",
        ),
        "d_angle_vs_production": _fit_or_none(
            [f.production_pct for f in local],
            [abs(f.d_angle) for f in local],
            False,
            warnings,
            "d_angle_vs_production",
        ),
    }
    if fits["d_angle_vs_production"] is not None:
        upper = fits["d_angle_vs_production"]
        fits["d_angle_vs_production_mirror"] = {
            "model_kind": upper["model_kind"],
            "params": [-upper["params"][0], upper["params"][1]],
            "rmse": upper["rmse"],
            "n_points": upper["n_points"],
        }

    n_grid = sum(1 for r in origin_rows if r["label"] == Origin.GRID_INDUCED.value)
    report = {
        "n_events": len(events),
        "n_labeled": len(origin_rows),
        "n_locally_induced": sum(
            1 for r in origin_rows if r["label"] == Origin.LOCALLY_INDUCED.value
        ),
        "n_grid_induced": n_grid,
        "n_indeterminate": sum(
            1 for r in origin_rows if r["label"] == Origin.INDETERMINATE.value
        ),
        "n_grid_confirmed_both": sum(
            1
            for r in origin_rows
            if r["label"] == Origin.GRID_INDUCED.value and r["agreement"] is True
        ),
        "method": "both" if pairs is not None else "impedance",
        "production_histogram": {
            "bin_edges": list(hist.bin_edges),
            "counts": list(hist.counts),
            "empty": hist.is_empty,
        },
        "fraction_at_or_below": {
            "threshold_pct": opts["production_threshold_pct"],
            "fraction": None
            if hist.is_empty
            else hist.fraction_at_or_below(opts["production_threshold_pct"]),
        },
        "fits": fits,
        "grid_responses": responses,
        "warnings": warnings,
    }

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = []

    def emit_jsonl(name, rows):
        path = out / name
        path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))
        outputs.append(path)

    emit_jsonl("origins.jsonl", origin_rows)
    emit_jsonl("stages.jsonl", stage_rows)
    _write_json(out / "features.json", feature_rows)
    outputs.append(out / "features.json")
    _write_json(out / "fits.json", fits)
    outputs.append(out / "fits.json")
    _write_json(out / "report.json", report)
    outputs.append(out / "report.json")

    def emit_csv(name, header, rows):
        path = out / name
        path.write_text("\n".join([header] + [",".join(map(repr, r)) for r in rows]) + "\n")
        outputs.append(path)

    emit_csv(
        "realz_vs_production.csv",
        "production_pct,real_z",
        [(f.production_pct, f.real_z) for f in local],
    )
    emit_csv(
        "dangle_vs_production.csv",
        "production_pct,abs_d_angle",
        [(f.production_pct, abs(f.d_angle)) for f in local],
    )
    emit_csv(
        "production_histogram.csv",
        "bin_lo,bin_hi,count",
        [
            (hist.bin_edges[k], hist.bin_edges[k + 1], hist.counts[k])
            for k in range(len(hist.counts))
        ]
        if not hist.is_empty
        else [],
    )

    inputs = {"solar": args.solar, "events": args.events}
    if args.aux:
        inputs["aux"] = args.aux
    _write_manifest(out, "analyze", inputs=inputs, outputs=outputs, extra={"n_events": len(events)})
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pmuevents",
        description="Micro-PMU event analytics for solar distribution feeders",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a labeled synthetic scenario")
    p_sim.add_argument("--config", required=True, help="JSON config with a 'scenario' section")
    p_sim.add_argument("--out", required=True, help="output directory")
    p_sim.set_defaults(func=cmd_simulate)

    p_det = sub.add_parser("detect", help="detect events in a phasor CSV")
    p_det.add_argument("--stream", required=True, help="phasor CSV path")
    p_det.add_argument("--model", help="trained GAN model JSON")
    p_det.add_argument("--baseline", action="store_true", help="use the rolling z-score baseline")
    p_det.add_argument("--threshold-quantile", type=float, dest="threshold_quantile")
    p_det.add_argument("--min-separation", type=float, dest="min_separation")
    p_det.add_argument("--z-threshold", type=float, dest="z_threshold")
    p_det.add_argument("--window", type=int, help="baseline rolling window, samples")
    p_det.add_argument("--rated-power", type=float, default=DEFAULT_RATED_POWER)
    p_det.add_argument("--nominal-rate", type=float, default=DEFAULT_RATE)
    p_det.add_argument("--config", help="JSON config with a 'detect' section")
    p_det.add_argument("--out", required=True)
    p_det.set_defaults(func=cmd_detect)

    p_an = sub.add_parser("analyze", help="origin, statistics, fits, stages")
    p_an.add_argument("--solar", required=True, help="solar feeder CSV")
    p_an.add_argument("--aux", help="auxiliary feeder CSV (enables signature inspection)")
    p_an.add_argument("--events", required=True, help="events.jsonl from detect")
    p_an.add_argument("--rated-power", type=float, default=DEFAULT_RATED_POWER)
    p_an.add_argument("--nominal-rate", type=float, default=DEFAULT_RATE)
    p_an.add_argument("--config", help="JSON config with an 'analyze' section")
    p_an.add_argument("--out", required=True)
    p_an.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
