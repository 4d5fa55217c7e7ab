"""Experiment configuration: schema, validation and serialisation.

A configuration is a flat ``dotted.path = value`` document (see
:mod:`sqzsim.cfgtext`).  Every accepted key is listed in :data:`SCHEMA`
with its default and permitted interval; unknown keys are rejected.
Only ``mode`` is required, plus the ``record.*`` observables in fit mode.
"""

import math
from dataclasses import dataclass, field, replace

from . import cfgtext
from .chain import ChainConfig, OpaParams, PumpStage, shg_pump
from .homodyne import BhdSettings, bhd_from_chain
from .inference import OBSERVABLES, PARAMETERS, MeasurementRecord, default_bounds
from .waveforms import SHAPES, PhaseWaveform

MODES = ("vacuum_squeeze", "bright_squeeze", "gain_scan", "fit")
FORMATS = ("csv", "json")

INF = math.inf


class ConfigError(ValueError):
    """Schema or range violation; ``path`` names the offending key."""

    def __init__(self, message, path=None, lineno=None):
        super().__init__(message)
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class Field:
    kind: type
    default: object = None
    low: float = -INF
    high: float = INF
    open_low: bool = False
    choices: tuple = ()
    optional: bool = False
    doc: str = ""


def _num(default, low=-INF, high=INF, open_low=False, optional=False, doc=""):
    return Field(float, default, low, high, open_low, optional=optional, doc=doc)


def _nonneg(default, doc=""):
    return _num(default, 0.0, doc=doc)


def _frac(default, doc=""):
    return _num(default, 0.0, 1.0, doc=doc)


SCHEMA = {
    "mode": Field(str, None, choices=MODES, doc="what run/simulate computes"),
    "rng_seed": Field(int, 0, 0, 2**64 - 1, doc="seed for jittered scan traces and fit starts"),
    "chain.seed_power": _nonneg(80e-6, "seed power guided into WG2 (W)"),
    "chain.pump_power": _nonneg(60e-3, "pump power into WG2 (W)"),
    "chain.eta_fiber": _frac(0.74, "fiber transmission, amplifier to BHD"),
    "chain.eta_interference": _frac(0.97, "signal-LO interference efficiency"),
    "chain.eta_detector": _frac(0.99, "photodiode quantum efficiency"),
    "chain.lo_power": _nonneg(5e-3, "local oscillator power (W)"),
    "chain.balanced_coupler_insertion_db": _nonneg(0.21, "metadata"),
    "chain.ratio_deviation": _frac(0.02, "metadata"),
    "chain.phase_jitter_rms": _nonneg(0.0, "LO-signal phase jitter rms (rad)"),
    "chain.eta_inject": _frac(1.0, "seed injection factor (coupler tap and splices)"),
    "chain.wavelength": _num(1550e-9, 0.0, open_low=True, doc="carrier wavelength (m), metadata"),
    "chain.linewidth": _nonneg(30e3, "seed linewidth (Hz), metadata"),
    "chain.opa.kappa": _nonneg(0.0, "squeezing rate per sqrt(W) of pump, per pass"),
    "chain.opa.eta_mid": _frac(1.0, "inter-pass transmission"),
    "chain.opa.delta": _num(0.0, doc="second-pass phase offset (rad)"),
    "chain.opa.n_pump": _nonneg(0.0, "pump-induced excess variance"),
    "chain.opa.eta_wg": _num(0.75, 0.0, 1.0, open_low=True, doc="waveguide transmission"),
    "chain.opa.seed_jitter_rms": _nonneg(0.0, "seed-pump phase jitter during gain scans (rad)"),
    "pump.fundamental_power": _nonneg(None, "MOPA output into WG1 (W)"),
    "pump.shg_output": _nonneg(None, "second-harmonic power (W)"),
    "pump.phase_match_temp": _num(37.3, doc="WG1 phase-matching temperature (C), metadata"),
    "pump.pump_into_wg2": _nonneg(None, "pump after VOA3 (W)"),
    "bhd.dark_clearance_db": _num(None, 0.0, optional=True, doc="shot-noise clearance (dB); none = ideal"),
    "bhd.analysis_frequency": _nonneg(2.5e6, "analysis frequency (Hz), metadata"),
    "waveform.shape": Field(str, "triangle", choices=SHAPES),
    "waveform.frequency": _nonneg(3.0, "modulation frequency (Hz)"),
    "waveform.amplitude": _nonneg(4 * math.pi, "peak-to-peak phase excursion (rad)"),
    "waveform.offset": _num(0.0, doc="phase at the centre of the excursion (rad)"),
    "scan.duration_s": _num(None, 0.0, open_low=True, optional=True, doc="none = one period"),
    "scan.sample_rate_hz": _num(200.0, 0.0, open_low=True),
    "scan.draws_per_sample": Field(int, 256, 1, 10**6),
    "scan.n_samples": Field(int, 501, 2, 10**7, doc="points in a gain scan"),
    "sweep.parameter": Field(str, None, optional=True),
    "sweep.start": _num(None, optional=True),
    "sweep.stop": _num(None, optional=True),
    "sweep.n_points": Field(int, None, 2, 10**6, optional=True),
    "output.path": Field(str, "-", doc="'-' for standard output"),
    "output.format": Field(str, "csv", choices=FORMATS),
    "fit.n_starts": Field(int, 8, 1, 10**4),
    "fit.polish": Field(int, 6, 0, 1000),
}
_record_defaults = MeasurementRecord()
for _name in OBSERVABLES + ("seed_in_w", "pump_w"):
    SCHEMA[f"record.{_name}"] = _num(getattr(_record_defaults, _name), optional=True)
for _name in OBSERVABLES:
    SCHEMA[f"record.tolerance.{_name}"] = _num(None, 0.0, open_low=True, optional=True)
for _name, (_lo, _hi) in default_bounds().items():
    SCHEMA[f"fit.bounds.{_name}.min"] = _num(None, optional=True)
    SCHEMA[f"fit.bounds.{_name}.max"] = _num(None, optional=True)

REQUIRED = ("mode",)
_SECTIONED = ("pump.", "sweep.", "record.", "fit.bounds.")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    start: float
    stop: float
    n_points: int

    def values(self):
        n = self.n_points
        return [self.start + (self.stop - self.start) * k / (n - 1) for k in range(n)]


@dataclass(frozen=True)
class ScanSettings:
    duration_s: float | None = None
    sample_rate_hz: float = 200.0
    draws_per_sample: int = 256
    n_samples: int = 501


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str
    chain: ChainConfig = field(default_factory=ChainConfig)
    bhd: BhdSettings = field(default_factory=BhdSettings)
    waveform: PhaseWaveform = field(default_factory=PhaseWaveform)
    scan: ScanSettings = field(default_factory=ScanSettings)
    sweep: SweepSpec | None = None
    pump: PumpStage | None = None
    record: MeasurementRecord | None = None
    fit_bounds: dict | None = None
    fit_n_starts: int = 8
    fit_polish: int = 6
    rng_seed: int = 0
    output_path: str = "-"
    output_format: str = "csv"
    values: dict = field(default_factory=dict, compare=False, repr=False)

    def with_overrides(self, **values):
        """Re-validate with some dotted keys replaced."""
        merged = dict(self.values)
        merged.update(values)
        if self.pump is not None:
            # with a pump section both keys name the power after VOA3
            for a, b in (("chain.pump_power", "pump.pump_into_wg2"), ("pump.pump_into_wg2", "chain.pump_power")):
                if a in values and b not in values:
                    merged[b] = values[a]
        return build_config(merged)


def _coerce(path, spec, value):
    if value is None:
        if spec.optional or spec.default is None:
            return None
        raise ConfigError(f"{path} may not be none", path)
    if spec.kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path} must be a string, got {value!r}", path)
        if spec.choices and value not in spec.choices:
            raise ConfigError(f"{path} must be one of {', '.join(spec.choices)}; got {value!r}", path)
        return value
    if isinstance(value, (bool, str)):
        raise ConfigError(f"{path} must be numeric, got {value!r}", path)
    if spec.kind is int:
        if not isinstance(value, int):
            raise ConfigError(f"{path} must be an integer, got {value!r}", path)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{path} must be finite, got {value!r}", path)
    low_bad = value <= spec.low if spec.open_low else value < spec.low
    if low_bad or value > spec.high:
        lb = "(" if spec.open_low else "["
        raise ConfigError(f"{path} = {value!r} is outside the permitted interval {lb}{spec.low:g}, {spec.high:g}]", path)
    return value


def validate_values(raw):
    """Check keys and ranges; return the full ``{path: value}`` with defaults."""
    unknown = [k for k in raw if k not in SCHEMA]
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]}", unknown[0])
    missing = [k for k in REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing required fields: {', '.join(missing)}", missing[0])
    out = {}
    for path, spec in SCHEMA.items():
        if path in raw:
            out[path] = _coerce(path, spec, raw[path])
        elif not path.startswith(_SECTIONED):
            out[path] = spec.default
    return out


def _section(values, prefix):
    return {k[len(prefix) :]: v for k, v in values.items() if k.startswith(prefix) and v is not None}


def build_config(raw):
    v = validate_values(raw)
    mode = v["mode"]

    pump = None
    pump_keys = _section(v, "pump.")
    if pump_keys:
        needed = ("fundamental_power", "shg_output", "pump_into_wg2")
        absent = [f"pump.{k}" for k in needed if k not in pump_keys]
        if absent:
            raise ConfigError(f"pump section incomplete, missing: {', '.join(absent)}", absent[0])
        pump = PumpStage(**pump_keys)
        try:
            delivered = shg_pump(pump)
        except ValueError as exc:
            raise ConfigError(str(exc), "pump") from None
        if "chain.pump_power" in raw and abs(v["chain.pump_power"] - delivered) > 1e-12 * max(delivered, 1.0):
            raise ConfigError(
                f"chain.pump_power = {v['chain.pump_power']} disagrees with pump.pump_into_wg2 = {delivered}",
                "chain.pump_power",
            )
        v["chain.pump_power"] = delivered

    opa_kw = _section(v, "chain.opa.")
    try:
        opa = OpaParams(**opa_kw)
    except ValueError as exc:
        raise ConfigError(str(exc), "chain.opa") from None
    chain_kw = {k: val for k, val in _section(v, "chain.").items() if not k.startswith("opa.")}
    chain = ChainConfig(opa=opa, **chain_kw)
    bhd = bhd_from_chain(chain, v["bhd.dark_clearance_db"], v["bhd.analysis_frequency"])

    try:
        waveform = PhaseWaveform(**_section(v, "waveform."))
    except ValueError as exc:
        raise ConfigError(str(exc), "waveform") from None
    scan = ScanSettings(
        duration_s=v["scan.duration_s"],
        sample_rate_hz=v["scan.sample_rate_hz"],
        draws_per_sample=v["scan.draws_per_sample"],
        n_samples=v["scan.n_samples"],
    )

    sweep = None
    sweep_keys = _section(v, "sweep.")
    if sweep_keys:
        absent = [f"sweep.{k}" for k in ("parameter", "start", "stop", "n_points") if k not in sweep_keys]
        if absent:
            raise ConfigError(f"sweep section incomplete, missing: {', '.join(absent)}", absent[0])
        target = sweep_keys["parameter"]
        spec = SCHEMA.get(target)
        if spec is None or spec.kind is not float or target.startswith(("sweep.", "record.", "fit.")):
            raise ConfigError(f"sweep.parameter {target!r} does not name a numeric chain field", "sweep.parameter")
        sweep = SweepSpec(target, sweep_keys["start"], sweep_keys["stop"], sweep_keys["n_points"])

    record = None
    record_keys = _section(v, "record.")
    if mode == "fit":
        absent = [f"record.{k}" for k in OBSERVABLES if k not in record_keys]
        if absent:
            raise ConfigError(f"fit mode requires a record section; missing: {', '.join(absent)}", absent[0])
    if record_keys:
        tol = _section(v, "record.tolerance.")
        values = {k: val for k, val in record_keys.items() if not k.startswith("tolerance.")}
        try:
            record = MeasurementRecord(**values, tolerances=tol or None)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "record") from None

    bounds = None
    bound_keys = _section(v, "fit.bounds.")
    if bound_keys:
        bounds = default_bounds(opa.eta_wg)
        for name in PARAMETERS:
            lo, hi = bounds[name]
            lo = bound_keys.get(f"{name}.min", lo)
            hi = bound_keys.get(f"{name}.max", hi)
            if lo > hi:
                raise ConfigError(f"fit.bounds.{name}: min {lo} exceeds max {hi}", f"fit.bounds.{name}")
            bounds[name] = (lo, hi)

    stored = {k: val for k, val in v.items() if k in raw or not k.startswith(_SECTIONED)}
    return ExperimentConfig(
        mode=mode,
        chain=chain,
        bhd=bhd,
        waveform=waveform,
        scan=scan,
        sweep=sweep,
        pump=pump,
        record=record,
        fit_bounds=bounds,
        fit_n_starts=v["fit.n_starts"],
        fit_polish=v["fit.polish"],
        rng_seed=v["rng_seed"],
        output_path=v["output.path"],
        output_format=v["output.format"],
        values=stored,
    )


def parse_config(text):
    """Parse and validate configuration text.

    Raises :class:`ConfigError` (with ``lineno`` for syntax errors and
    ``path`` for schema violations).
    """
    try:
        raw = cfgtext.loads(text)
    except cfgtext.ConfigSyntaxError as exc:
        raise ConfigError(str(exc), lineno=exc.lineno) from None
    return build_config(raw)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(config):
    """Text form of ``config`` that reparses to an equal configuration."""
    values = {k: v for k, v in config.values.items() if v is not None or k in ("bhd.dark_clearance_db", "scan.duration_s")}
    return cfgtext.dumps(values)


def replace_chain(config, **changes):
    return replace(config, chain=replace(config.chain, **changes))
