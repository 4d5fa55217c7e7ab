"""Balanced homodyne detection of the amplifier output.

Visibility and photodiode efficiency act as loss channels on the signal, the
LO phase selects the measured quadrature, and slow LO-signal phase jitter
mixes the anti-squeezed variance into the squeezed one.
"""

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import gaussian as gs
from .chain import jitter_weight, opa_transform
from .validation import check_fraction, check_nonnegative
from .waveforms import PhaseWaveform

log = logging.getLogger(__name__)

#: minimum LO/signal power ratio for the shot-noise-limited approximation
LO_DOMINANCE = 100.0


class LocalOscillatorError(ValueError):
    """The LO is too weak for the signal to be treated as a perturbation."""


@dataclass(frozen=True)
class BhdSettings:
    """Balanced detector settings.

    ``visibility_efficiency`` enters as a power transmission (not squared).
    ``dark_clearance_db`` is the shot-noise clearance above electronic
    noise; ``None`` means an ideal noiseless detector.
    """

    lo_power: float = 5e-3
    visibility_efficiency: float = 0.97
    detector_efficiency: float = 0.99
    dark_clearance_db: float | None = None
    analysis_frequency: float = 2.5e6

    def __post_init__(self):
        check_nonnegative(self.lo_power, "lo_power")
        check_fraction(self.visibility_efficiency, "visibility_efficiency")
        check_fraction(self.detector_efficiency, "detector_efficiency")

    @property
    def efficiency(self):
        return self.visibility_efficiency * self.detector_efficiency

    def check_lo(self, signal_power):
        """Raise :class:`LocalOscillatorError` if the LO does not dominate."""
        signal_power = float(np.max(signal_power))
        if signal_power > 0 and self.lo_power < LO_DOMINANCE * signal_power:
            raise LocalOscillatorError(
                f"LO power {self.lo_power:.3g} W is below {LO_DOMINANCE:g}x the "
                f"signal power {signal_power:.3g} W"
            )


def bhd_from_chain(cfg, dark_clearance_db=None, analysis_frequency=2.5e6):
    """Detector settings that share the chain's efficiencies and LO power."""
    return BhdSettings(
        lo_power=cfg.lo_power,
        visibility_efficiency=cfg.eta_interference,
        detector_efficiency=cfg.eta_detector,
        dark_clearance_db=dark_clearance_db,
        analysis_frequency=analysis_frequency,
    )


def detected_state(state, settings):
    out = gs.loss(state, settings.visibility_efficiency)
    out = gs.loss(out, settings.detector_efficiency)
    if settings.dark_clearance_db is not None:
        n_dark = gs.from_db(-settings.dark_clearance_db)
        out = gs.excess_noise(gs.excess_noise(out, n_dark, 0.0), n_dark, 0.5 * np.pi)
    return out


def noise_power_db(state, lo_phase, settings):
    """Detected quadrature noise at ``lo_phase``, in dB relative to shot noise."""
    settings.check_lo(gs.power_of(state))
    return gs.to_db(gs.measure_variance(detected_state(state, settings), lo_phase))


def jitter_averaged_variance(v_min, v_max, theta_rms):
    """Variance at the squeezing phase averaged over Gaussian LO jitter.

    Swap the arguments to get the averaged anti-squeezed variance.
    """
    v_min = np.asarray(v_min, dtype=float)
    v_max = np.asarray(v_max, dtype=float)
    check_nonnegative(theta_rms, "theta_rms")
    c = jitter_weight(theta_rms)
    out = v_min * c + v_max * (1.0 - c)
    return float(out) if out.ndim == 0 else out


def jittered_extrema(state, theta_rms):
    """``(squeezed, anti_squeezed)`` variances under LO phase jitter.

    Unlike :func:`jitter_averaged_variance` this takes a state and accepts
    either ordering of its eigenvalues.
    """
    v_min, v_max, _ = gs.variance_extrema(state)
    c = jitter_weight(theta_rms)
    return v_min * c + v_max * (1.0 - c), v_max * c + v_min * (1.0 - c)


@dataclass
class ScanTrace:
    """Noise power (and DC interference term) sampled along an LO scan."""

    time: np.ndarray
    noise_db: np.ndarray
    dc: np.ndarray
    settings: BhdSettings = field(default_factory=BhdSettings)

    HEADER = ("time_s", "noise_db", "dc_arb")

    def rows(self):
        return zip(self.time, self.noise_db, self.dc)

    def to_csv(self, fh=None):
        """Write (or return, if ``fh`` is None) the CSV representation."""
        buf = io.StringIO() if fh is None else fh
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.HEADER)
        for row in self.rows():
            writer.writerow([f"{v:.9e}" for v in row])
        if fh is None:
            return buf.getvalue()
        return None

    def as_records(self):
        return [dict(zip(self.HEADER, map(float, row))) for row in self.rows()]


def scan_trace(
    state,
    waveform: PhaseWaveform,
    settings,
    duration_s,
    sample_rate_hz,
    theta_rms=0.0,
    rng_seed=0,
    draws_per_sample=256,
):
    """Synthesise an LO phase scan as seen on the spectrum analyser.

    Each sample is the noise variance averaged over ``draws_per_sample``
    Gaussian LO phase draws around the waveform phase, standing in for the
    analyser's integration window; the same draws give the DC channel, the
    projection of the signal mean on the LO axis.
    """
    if waveform.shape != "constant" and sample_rate_hz < 2 * waveform.frequency:
        raise ValueError(
            f"sample rate {sample_rate_hz} Hz is below twice the waveform frequency "
            f"{waveform.frequency} Hz"
        )
    if duration_s < waveform.period * (1 - 1e-12):
        raise ValueError(f"duration {duration_s} s is shorter than one waveform period")
    check_nonnegative(theta_rms, "theta_rms")
    settings.check_lo(gs.power_of(state))

    n = int(np.floor(duration_s * sample_rate_hz + 1e-9)) + 1
    t = np.arange(n) / sample_rate_hz
    rng = np.random.default_rng(rng_seed)
    draws = int(draws_per_sample) if theta_rms > 0 else 1
    phases = waveform.phase(t)[:, None] + theta_rms * rng.standard_normal((n, draws))

    det = detected_state(state, settings)
    variance = gs.measure_variance(det, phases).mean(axis=1)
    dc = (det.mean[0] * np.cos(phases) + det.mean[1] * np.sin(phases)).mean(axis=1)
    return ScanTrace(t, gs.to_db(variance), dc, settings)


def dc_lock_phase(state, params, pump_power, n_grid=64):
    """Seed phase that minimises the amplifier output power.

    This is the deamplification lock: a coarse grid brackets the minimum of
    the DC level, and a golden-section search refines it.
    """
    if not gs.power_of(state) > 0:
        raise ValueError("cannot lock on a zero-mean state: there is no DC component")

    def out_power(phi):
        return gs.power_of(opa_transform(state, params, pump_power, phi))

    grid = np.linspace(0.0, np.pi, n_grid, endpoint=False)
    powers = out_power(grid)
    k = int(np.argmin(powers))
    if np.ptp(powers) <= 1e-14 * np.max(powers):
        return float(grid[k])
    step = grid[1] - grid[0]
    res = minimize_scalar(
        out_power,
        bracket=(grid[k] - step, grid[k], grid[k] + step),
        method="golden",
        tol=1e-10,
    )
    log.debug("dc lock at %.6f rad after %d evaluations", res.x, res.nfev)
    return float(np.mod(res.x, np.pi))
