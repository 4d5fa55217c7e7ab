"""Command-line front end: ``sqzsim {simulate,scan,sweep,fit,check} CONFIG``.

Results go to ``--out`` (default standard output) as CSV or JSON; JSON is a
list of row objects mirroring the CSV columns.  Failures exit non-zero and
write one JSON error record to standard error.  ``SQZSIM_LOG`` sets the log
level (default WARNING).
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import gaussian as gs
from .chain import gain_extrema, inject_seed, opa_transform, scan_gain_trace
from .config import ConfigError, ExperimentConfig, load_config
from .homodyne import LO_DOMINANCE, LocalOscillatorError, dc_lock_phase, scan_trace
from .inference import current_params, fit, forward_observables

log = logging.getLogger("sqzsim")

REPORT_COLUMNS = ("squeeze_db", "antisqueeze_db", "output_power_w", "lock_phase", "gain_max", "gain_min")


@dataclass
class Table:
    header: tuple
    rows: list

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue()

    def to_json(self):
        records = [{k: _json_value(v) for k, v in zip(self.header, row)} for row in self.rows]
        return json.dumps(records, indent=1) + "\n"

    def render(self, fmt):
        return self.to_json() if fmt == "json" else self.to_csv()


def _fmt(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    return f"{float(value):.9e}"


def _json_value(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return int(value)
    value = float(value)
    # same 10 significant digits as the CSV
    return float(f"{value:.9e}") if math.isfinite(value) else None


def simulate_report(config: ExperimentConfig):
    """Squeezing report for the vacuum or bright mode, as an ordered dict."""
    chain, bhd = config.chain, config.bhd
    obs = forward_observables(current_params(chain), chain, bhd)
    if config.mode == "vacuum_squeeze":
        sq, anti, power, lock = obs["vac_squeeze_db"], obs["vac_antisqueeze_db"], 0.0, math.nan
    elif config.mode == "bright_squeeze":
        bhd.check_lo(obs["bsl_out_w"] * chain.downstream_efficiency)
        sq, anti, power = obs["bsl_squeeze_db"], obs["bsl_antisqueeze_db"], obs["bsl_out_w"]
        lock = dc_lock_phase(inject_seed(chain), chain.opa, chain.pump_power)
    else:
        raise ValueError(f"mode {config.mode!r} has no squeezing report")
    values = (sq, anti, power, lock, obs["gain_max"], obs["gain_min"])
    return dict(zip(REPORT_COLUMNS, (float(x) for x in values)))


def gain_scan_table(config):
    t, gain = scan_gain_trace(config.chain.opa, config.chain.pump_power, config.waveform, config.scan.n_samples, config.scan.duration_s)
    return Table(("time_s", "gain"), list(zip(t, gain)))


def fit_table(config):
    if config.record is None:
        raise ValueError("fit mode requires a record section")
    result = fit(
        config.record,
        config.chain,
        bounds=config.fit_bounds,
        n_starts=config.fit_n_starts,
        rng_seed=config.rng_seed,
        polish=config.fit_polish,
    )
    rows = [(name, result.predicted[name], r, abs(r) > 1.0) for name, r in result.residuals.items()]
    rows += [(f"param.{name}", value, math.nan, False) for name, value in result.params.items()]
    rows.append(("objective", result.objective, math.nan, not result.converged))
    return Table(("observable", "value", "normalized_residual", "flag"), rows), result


def run(config):
    """Dispatch on ``config.mode``; returns a :class:`Table`."""
    if config.mode in ("vacuum_squeeze", "bright_squeeze"):
        report = simulate_report(config)
        return Table(REPORT_COLUMNS, [tuple(report.values())])
    if config.mode == "gain_scan":
        return gain_scan_table(config)
    return fit_table(config)[0]


def sweep(config):
    """One report row per swept value, swept parameter first."""
    if config.sweep is None:
        raise ValueError("sweep requires a sweep section")
    if config.mode not in ("vacuum_squeeze", "bright_squeeze"):
        raise ValueError(f"sweep supports the squeezing modes, not {config.mode!r}")
    spec = config.sweep
    rows = []
    for value in spec.values():
        point = config.with_overrides(**{spec.parameter: value})
        rows.append((value,) + tuple(simulate_report(point).values()))
    return Table((spec.parameter,) + REPORT_COLUMNS, rows)


def scan_state(config):
    """State entering the balanced detector, and the LO jitter it sees."""
    chain = config.chain
    if config.mode == "vacuum_squeeze":
        out = opa_transform(gs.vacuum(chain.wavelength), chain.opa, chain.pump_power, 0.0)
        jitter = 0.0
    elif config.mode == "bright_squeeze":
        _, _, phase_min = gain_extrema(chain.opa, chain.pump_power)
        out = opa_transform(inject_seed(chain), chain.opa, chain.pump_power, float(phase_min))
        jitter = chain.phase_jitter_rms
    else:
        raise ValueError(f"mode {config.mode!r} has no homodyne scan; use simulate for gain_scan")
    return gs.loss(out, chain.eta_fiber), jitter


def scan(config):
    if config.mode == "gain_scan":
        return gain_scan_table(config)
    state, jitter = scan_state(config)
    duration = config.scan.duration_s or config.waveform.period
    trace = scan_trace(
        state,
        config.waveform,
        config.bhd,
        duration,
        config.scan.sample_rate_hz,
        theta_rms=jitter,
        rng_seed=config.rng_seed,
        draws_per_sample=config.scan.draws_per_sample,
    )
    return Table(trace.HEADER, list(trace.rows()))


def check(config):
    """Invariant audit: list of ``(name, value, ok)`` rows."""
    chain = config.chain
    rows = [("total_efficiency", chain.total_efficiency, 0.0 < chain.total_efficiency <= 1.0)]
    if config.pump is not None:
        rows.append(("shg_conversion", config.pump.conversion_efficiency, True))
    rows.append(("pump_power_w", chain.pump_power, chain.pump_power >= 0))
    vac = opa_transform(gs.vacuum(), chain.opa, chain.pump_power, 0.0)
    rows.append(("opa_vacuum_det", float(vac.det()), vac.is_physical()))
    obs = forward_observables(current_params(chain), chain, config.bhd)
    g_max, g_min = obs["gain_max"], obs["gain_min"]
    rows.append(("gain_max", g_max, g_max >= 1.0 - 1e-12))
    rows.append(("gain_min", g_min, 0.0 < g_min <= 1.0 + 1e-12))
    if chain.seed_power > 0:
        signal = obs["bsl_out_w"] * chain.downstream_efficiency
        ratio = chain.lo_power / signal if signal > 0 else math.inf
        rows.append(("lo_signal_ratio", ratio, ratio >= LO_DOMINANCE))
    return Table(("check", "value", "ok"), [(n, v, bool(ok)) for n, v, ok in rows])


def _error(kind, message, code, **extra):
    record = {"error": kind, "message": str(message)}
    record.update({k: v for k, v in extra.items() if v is not None})
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def _write(text, path):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _configure_logging(level):
    for handler in [h for h in log.handlers if getattr(h, "_sqzsim", False)]:
        log.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler._sqzsim = True
    log.addHandler(handler)
    log.propagate = False
    try:
        log.setLevel(level.upper())
    except ValueError:
        log.setLevel(logging.WARNING)
        log.warning("SQZSIM_LOG=%r is not a log level; using WARNING", level)


def build_parser():
    parser = argparse.ArgumentParser(prog="sqzsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "run the configured mode"),
        ("scan", "synthesise an LO phase scan (or a gain scan in gain_scan mode)"),
        ("sweep", "repeat the report over the sweep section"),
        ("fit", "fit model parameters to the record section"),
        ("check", "parse the config and audit chain invariants"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config")
        p.add_argument("--seed", type=int, default=None, help="override rng_seed")
        p.add_argument("--out", default=None, help="output path ('-' for stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        if name == "fit":
            p.add_argument("--doc", default=None, help="also write the FitResult document here")
    return parser


def main(argv=None):
    _configure_logging(os.environ.get("SQZSIM_LOG", "WARNING"))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code:
            return _error("usage", "invalid command line", 2)
        return 0

    try:
        config = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer", "rng_seed")
            config = replace(config, rng_seed=args.seed)
        if args.command == "fit" and config.mode != "fit":
            config = config.with_overrides(mode="fit", rng_seed=config.rng_seed)
    except OSError as exc:
        return _error("io", exc, 2, path=args.config)
    except ConfigError as exc:
        return _error("config", exc, 2, path=exc.path, line=exc.lineno)

    fmt = args.format or config.output_format
    out = args.out if args.out is not None else config.output_path
    try:
        if args.command == "simulate":
            table = run(config)
        elif args.command == "scan":
            table = scan(config)
        elif args.command == "sweep":
            table = sweep(config)
        elif args.command == "fit":
            table, result = fit_table(config)
            if args.doc:
                _write(result.to_document(), args.doc)
        else:
            table = check(config)
        _write(table.render(fmt), out)
    except LocalOscillatorError as exc:
        return _error("lo_dominance", exc, 1)
    except ConfigError as exc:
        return _error("config", exc, 2, path=exc.path)
    except (ValueError, FloatingPointError) as exc:
        return _error("runtime", exc, 1)
    except OSError as exc:
        return _error("io", exc, 1, path=out)
    if args.command == "check" and not all(row[2] for row in table.rows):
        return _error("check", "one or more invariants failed", 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
