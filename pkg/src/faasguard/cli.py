"""Command-line interface.

One binary, five subcommands: simulate, train, detect, update, evaluate.
Options resolve as: command-line flag, then config-file key (--config, JSON
object keyed by option dest name), then built-in default. Every command
echoes its fully resolved configuration as one `config {...}` JSON line so
a run can be replayed from its log.

Exit codes: 0 success, 1 usage/config error, 2 data error (malformed
inputs, unreadable files, corrupt models), 3 internal error. Output files
that did not exist before a failing command are removed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .autoencoder.persist import load_model, save_model
from .detect import evaluate_metrics, load_reports, save_reports
from .errors import ConfigError, DataError, FaasGuardError
from .ingest import (
    load_events,
    load_labels,
    resolve_labels,
    save_events,
    save_labels,
)
from .model import assemble_function_flows
from .pipeline import TrainSettings, detect_flows, train_ensemble, update_ensemble
from .sim import SimConfig, simulate
from .sim.generate import sorted_events

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class _OutputGuard:
    """Tracks output paths so a failing command leaves no partial files."""

    def __init__(self):
        self._fresh: list[Path] = []

    def register(self, path: Path) -> Path:
        path = Path(path)
        if not path.exists():
            self._fresh.append(path)
        return path

    def cleanup(self) -> None:
        for path in self._fresh:
            try:
                if path.exists():
                    path.unlink()
            except OSError:
                pass


def _echo(resolved: dict, quiet: bool) -> None:
    if not quiet:
        print("config " + json.dumps(resolved, sort_keys=True))


def _opt(ns, config: dict, name: str, default):
    value = getattr(ns, name, None)
    if value is None:
        value = config.get(name, default)
    return value


def _parse_widths(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        values = list(text)
    else:
        values = [p.strip() for p in str(text).split(",") if p.strip()]
    try:
        widths = tuple(int(v) for v in values)
    except ValueError as exc:
        raise ConfigError(f"invalid hidden widths {text!r}") from exc
    if not widths:
        raise ConfigError("hidden widths must not be empty")
    return widths


def _settings(ns, config: dict, seed: int) -> TrainSettings:
    return TrainSettings(
        seed=seed,
        split_ratio=float(_opt(ns, config, "split_ratio", 0.8)),
        hidden_widths=_parse_widths(
            _opt(ns, config, "hidden_widths", "128,64,32")),
        epochs=int(_opt(ns, config, "epochs", 15)),
        batch_size=int(_opt(ns, config, "batch_size", 32)),
        learning_rate=float(_opt(ns, config, "learning_rate", 1e-4)),
    )


def _cmd_simulate(ns, config, guard, quiet):
    seed = int(_opt(ns, config, "seed", 7))
    anomaly_rate = float(_opt(ns, config, "anomaly_rate", 0.0))
    if _opt(ns, config, "benign", False):
        anomaly_rate = 0.0
    weights = _opt(ns, config, "per_attack_weights", None)
    if isinstance(weights, str):
        try:
            weights = json.loads(weights)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid attack weights JSON: {exc}") from exc
    mail_cap = _opt(ns, config, "mail_cap", 200)
    if mail_cap is not None:
        mail_cap = int(mail_cap)
        if mail_cap < 0:
            mail_cap = None

    sim_config = SimConfig(
        application=_opt(ns, config, "app", None) or _required("--app"),
        seed=seed,
        iterations=int(_opt(ns, config, "iterations", 0)),
        files_uploaded=int(_opt(ns, config, "files", 0)),
        anomaly_rate=anomaly_rate,
        per_attack_weights=weights,
        cold_start_rate=float(_opt(ns, config, "cold_start_rate", 0.02)),
        arrival_process=_opt(ns, config, "arrival", "uniform"),
        arrival_spacing_ms=int(_opt(ns, config, "spacing_ms", 60_000)),
        mail_cap=mail_cap,
    )
    out_dir = Path(_opt(ns, config, "out", None) or _required("--out"))
    resolved = dict(sim_config.to_dict(), out=str(out_dir))
    _echo(resolved, quiet)

    corpus = simulate(sim_config)
    out_dir.mkdir(parents=True, exist_ok=True)
    events_path = guard.register(out_dir / "events.ndjson")
    labels_path = guard.register(out_dir / "labels.ndjson")
    manifest_path = guard.register(out_dir / "manifest.json")
    save_events(events_path, sorted_events(corpus.events))
    save_labels(labels_path,
                {f: corpus.labels[f] for f in sorted(corpus.labels)})
    manifest_path.write_text(
        json.dumps(corpus.manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if not quiet:
        for label, count in corpus.manifest["counts"]["labels"].items():
            print(f"  {label}: {count}")
        print(f"wrote {events_path}")


def _required(flag: str):
    raise ConfigError(f"{flag} is required")


def _cmd_train(ns, config, guard, quiet):
    seed = int(_opt(ns, config, "seed", 7))
    settings = _settings(ns, config, seed)
    events_path = _opt(ns, config, "events", None) or _required("--events")
    model_path = Path(_opt(ns, config, "model", None) or _required("--model"))
    labels_path = _opt(ns, config, "labels", None)

    resolved = {
        "command": "train", "events": str(events_path),
        "labels": labels_path and str(labels_path), "model": str(model_path),
        "seed": settings.seed, "splitRatio": settings.split_ratio,
        "hiddenWidths": list(settings.hidden_widths),
        "epochs": settings.epochs, "batchSize": settings.batch_size,
        "learningRate": settings.learning_rate,
    }
    _echo(resolved, quiet)

    events = load_events(events_path)
    labels = load_labels(labels_path) if labels_path else None
    ensemble = train_ensemble(events, labels, settings)
    guard.register(model_path)
    save_model(model_path, ensemble)
    if not quiet:
        for w, summary in sorted(
                ensemble.metadata["validation"].items(), key=lambda kv: int(kv[0])):
            print(
                f"window {w}: trainWindows={summary['trainWindows']} "
                f"valWindows={summary['valWindows']} "
                f"meanValError={summary['meanValError']:.6g} "
                f"threshold={summary['threshold']:.6g}"
            )
        print(f"wrote {model_path}")


def _metrics_payload(metrics) -> dict:
    return {name: m.to_dict() for name, m in metrics.items()}


def _print_metrics(metrics, quiet):
    if quiet:
        return
    for name in ("flow", "window"):
        m = metrics[name]
        flags = f" flags={','.join(m.flags)}" if m.flags else ""
        print(
            f"{name}: precision={m.precision:.4f} recall={m.recall:.4f} "
            f"f1={m.f1:.4f} fpr={m.fpr:.4f} fnr={m.fnr:.4f}{flags}"
        )
        for attack, sub in m.per_attack.items():
            print(f"  {attack}: recall={sub.recall:.4f} f1={sub.f1:.4f}")


def _cmd_detect(ns, config, guard, quiet):
    model_path = _opt(ns, config, "model", None) or _required("--model")
    events_path = _opt(ns, config, "events", None) or _required("--events")
    report_path = Path(
        _opt(ns, config, "report", None) or _required("--report"))
    labels_path = _opt(ns, config, "labels", None)
    metrics_path = _opt(ns, config, "metrics", None)

    resolved = {
        "command": "detect", "model": str(model_path),
        "events": str(events_path), "report": str(report_path),
        "labels": labels_path and str(labels_path),
        "metrics": metrics_path and str(metrics_path),
    }
    _echo(resolved, quiet)

    ensemble = load_model(model_path)
    events = load_events(events_path)
    labels = None
    if labels_path:
        raw = load_labels(labels_path)
        flow_ids = [f.function_flow_id
                    for f in assemble_function_flows(events)]
        extras = set(raw) - set(flow_ids)
        if extras and not quiet:
            print(
                f"warning: {len(extras)} label records match no scored "
                "flow and are ignored",
                file=sys.stderr,
            )
        labels = resolve_labels(raw, flow_ids)
    reports, metrics = detect_flows(ensemble, events, labels)

    guard.register(report_path)
    save_reports(report_path, reports)
    anomalous = sum(1 for r in reports if r.anomalous)
    if not quiet:
        print(f"scored {len(reports)} flows, {anomalous} anomalous")
    if metrics is not None:
        _print_metrics(metrics, quiet)
        if metrics_path:
            path = guard.register(Path(metrics_path))
            path.write_text(
                json.dumps(_metrics_payload(metrics), indent=2,
                           sort_keys=True) + "\n",
                encoding="utf-8",
            )


def _cmd_update(ns, config, guard, quiet):
    model_path = Path(_opt(ns, config, "model", None) or _required("--model"))
    old_path = _opt(ns, config, "old_events", None) or _required("--old-events")
    new_path = _opt(ns, config, "new_events", None) or _required("--new-events")
    out_path = Path(_opt(ns, config, "out", None) or _required("--out"))
    new_labels_path = _opt(ns, config, "new_labels", None)
    old_fraction = float(_opt(ns, config, "old_fraction", 0.1))
    if out_path.resolve() == model_path.resolve():
        raise ConfigError(
            "--out must differ from --model; updates never overwrite the "
            "original model file"
        )

    ensemble = load_model(model_path)
    seed = _opt(ns, config, "seed", None)
    if seed is None:
        seed = int(ensemble.metadata.get("seed", 0)) + 1
    settings = _settings(ns, config, int(seed))

    resolved = {
        "command": "update", "model": str(model_path),
        "oldEvents": str(old_path), "newEvents": str(new_path),
        "out": str(out_path), "oldFraction": old_fraction,
        "seed": settings.seed, "epochs": settings.epochs,
        "batchSize": settings.batch_size,
        "learningRate": settings.learning_rate,
        "splitRatio": settings.split_ratio,
    }
    _echo(resolved, quiet)
    if old_fraction == 0.0:
        print(
            "warning: --old-fraction 0 disables replay of the original "
            "training data; the default mix keeps 10%",
            file=sys.stderr,
        )

    old_events = load_events(old_path)
    new_events = load_events(new_path)
    new_labels = load_labels(new_labels_path) if new_labels_path else None
    updated = update_ensemble(
        ensemble, old_events, new_events,
        settings=settings, old_fraction=old_fraction, new_labels=new_labels,
    )
    guard.register(out_path)
    save_model(out_path, updated)
    if not quiet:
        for w in sorted(updated.thresholds):
            print(f"window {w}: threshold={updated.thresholds[w]:.6g}")
        print(f"wrote {out_path}")


def _cmd_evaluate(ns, config, guard, quiet):
    report_path = _opt(ns, config, "report", None) or _required("--report")
    labels_path = _opt(ns, config, "labels", None) or _required("--labels")
    out_path = _opt(ns, config, "out", None)

    resolved = {
        "command": "evaluate", "report": str(report_path),
        "labels": str(labels_path), "out": out_path and str(out_path),
    }
    _echo(resolved, quiet)

    reports = load_reports(report_path)
    raw = load_labels(labels_path)
    report_ids = [r.function_flow_id for r in reports]
    unmatched = sorted(set(raw) - set(report_ids))
    if unmatched:
        raise DataError(
            f"id mismatch between report and labels: {len(unmatched)} "
            f"labeled flows have no report (first: {unmatched[0]!r})"
        )
    labels = resolve_labels(raw, report_ids)
    metrics = {
        "flow": evaluate_metrics(reports, labels, granularity="flow"),
        "window": evaluate_metrics(reports, labels, granularity="window"),
    }
    _print_metrics(metrics, quiet)
    if out_path:
        path = guard.register(Path(out_path))
        path.write_text(
            json.dumps(_metrics_payload(metrics), indent=2, sort_keys=True)
            + "\n",
            encoding="utf-8",
        )


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON config file; flags override its keys")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--quiet", action="store_true",
                        default=argparse.SUPPRESS)

    parser = _Parser(
        prog="faasguard",
        description="Trace anomaly detection for serverless functions",
        parents=[common],
    )
    # set_defaults would overwrite the SUPPRESS default on the action
    # objects shared with the subparsers, so missing shared flags are
    # handled with getattr instead.
    parser.set_defaults(handler=None)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common],
                       help="generate a labeled trace corpus")
    p.add_argument("--app", choices=("airline", "vod"))
    p.add_argument("--iterations", type=int)
    p.add_argument("--files", type=int)
    p.add_argument("--anomaly-rate", type=float, dest="anomaly_rate")
    p.add_argument("--benign", action="store_true", default=None)
    p.add_argument("--cold-start-rate", type=float, dest="cold_start_rate")
    p.add_argument("--arrival", choices=("uniform", "diurnal"))
    p.add_argument("--spacing-ms", type=int, dest="spacing_ms")
    p.add_argument("--mail-cap", type=int, dest="mail_cap")
    p.add_argument("--attack-weights", dest="per_attack_weights")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("train", parents=[common],
                       help="train the autoencoder ensemble on benign events")
    p.add_argument("--events")
    p.add_argument("--labels")
    p.add_argument("--model")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--split-ratio", type=float, dest="split_ratio")
    p.add_argument("--hidden-widths", dest="hidden_widths")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("detect", parents=[common],
                       help="score events against a trained model")
    p.add_argument("--model")
    p.add_argument("--events")
    p.add_argument("--report")
    p.add_argument("--labels")
    p.add_argument("--metrics")
    p.set_defaults(handler=_cmd_detect)

    p = sub.add_parser("update", parents=[common],
                       help="fine-tune a model on new benign events")
    p.add_argument("--model")
    p.add_argument("--old-events", dest="old_events")
    p.add_argument("--new-events", dest="new_events")
    p.add_argument("--new-labels", dest="new_labels")
    p.add_argument("--out")
    p.add_argument("--old-fraction", type=float, dest="old_fraction")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--split-ratio", type=float, dest="split_ratio")
    p.set_defaults(handler=_cmd_update)

    p = sub.add_parser("evaluate", parents=[common],
                       help="compute metrics from a report and labels")
    p.add_argument("--report")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_evaluate)

    return parser


def _load_config_file(path) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.handler is None:
        parser.print_usage(sys.stderr)
        print("faasguard: error: a subcommand is required", file=sys.stderr)
        return 1

    guard = _OutputGuard()
    quiet = bool(getattr(ns, "quiet", False))
    try:
        config = _load_config_file(getattr(ns, "config", None))
        ns.handler(ns, config, guard, quiet)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        guard.cleanup()
        return 1
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        guard.cleanup()
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        guard.cleanup()
        return 2
    except FaasGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        guard.cleanup()
        return 3
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        guard.cleanup()
        return 3


if __name__ == "__main__":
    sys.exit(main())
