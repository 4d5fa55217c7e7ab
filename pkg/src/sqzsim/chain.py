"""Component models of the fiber squeezing setup.

The double-pass parametric amplifier and the passive losses that follow it.
The pump chain (fundamental -> SHG -> VOA) is plain power bookkeeping.

The double pass is modelled as squeeze -> inter-pass loss -> squeeze with a
second-pass phase offset, followed by pump-induced excess noise on the
anti-squeezed axis and the remainder of the waveguide loss.  The pump is a
classical undepleted field; the per-pass squeezing rate is
``r = kappa * sqrt(P_pump)``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import gaussian as gs
from .validation import check_fraction, check_nonnegative
from .waveforms import PhaseWaveform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OpaParams:
    """Double-pass amplifier parameters.

    Attributes:
        kappa: squeezing rate per sqrt(W) of pump, applied on each pass.
        eta_mid: power transmission between the two passes.  Must be at
            least ``eta_wg``; the rest of the waveguide loss is applied at
            the output so that the unpumped transmission is always
            ``eta_wg``.
        delta: phase offset (rad) of the second pass relative to the first.
        n_pump: excess variance (shot-noise units) added on the
            anti-squeezed axis whenever there is parametric gain.
        eta_wg: total passive waveguide transmission.
        seed_jitter_rms: rms (rad) of the unlocked seed-pump relative phase
            during a gain measurement.  It averages the measured gain curve
            and leaves the quadrature covariance untouched.
    """

    kappa: float = 0.0
    eta_mid: float = 1.0
    delta: float = 0.0
    n_pump: float = 0.0
    eta_wg: float = 0.75
    seed_jitter_rms: float = 0.0

    def __post_init__(self):
        check_nonnegative(self.kappa, "kappa")
        check_fraction(self.eta_mid, "eta_mid")
        check_nonnegative(self.n_pump, "n_pump")
        check_fraction(self.eta_wg, "eta_wg", allow_zero=False)
        check_nonnegative(self.seed_jitter_rms, "seed_jitter_rms")
        if np.any(np.asarray(self.eta_mid) < np.asarray(self.eta_wg) - 1e-15):
            raise ValueError(
                f"eta_mid must lie in [eta_wg, 1] = [{self.eta_wg}, 1], got {self.eta_mid!r}"
            )

    def rate(self, pump_power):
        """Per-pass squeezing rate ``kappa * sqrt(P)``."""
        return np.asarray(self.kappa) * np.sqrt(check_nonnegative(pump_power, "pump_power"))


@dataclass(frozen=True)
class PumpStage:
    """Classical pump power chain: MOPA output -> SHG -> VOA3 -> WG2."""

    fundamental_power: float = 0.8
    shg_output: float = 0.11
    phase_match_temp: float = 37.3
    pump_into_wg2: float = 0.06

    @property
    def conversion_efficiency(self):
        if self.fundamental_power == 0:
            return 0.0
        return self.shg_output / self.fundamental_power


def shg_pump(stage):
    """Pump power reaching the amplifier, after checking the power chain."""
    for name in ("fundamental_power", "shg_output", "pump_into_wg2"):
        check_nonnegative(getattr(stage, name), name)
    if stage.shg_output > stage.fundamental_power:
        raise ValueError(
            f"SHG output {stage.shg_output} W exceeds fundamental {stage.fundamental_power} W"
        )
    if stage.pump_into_wg2 > stage.shg_output:
        raise ValueError(
            f"pump into WG2 {stage.pump_into_wg2} W exceeds SHG output {stage.shg_output} W"
        )
    log.debug("SHG conversion efficiency %.4f", stage.conversion_efficiency)
    return stage.pump_into_wg2


@dataclass(frozen=True)
class ChainConfig:
    """The optical chain from seed injection to the balanced detector.

    Defaults are the measured values of the setup; ``eta_inject`` and
    ``phase_jitter_rms`` are nuisance parameters left to the fit.
    ``balanced_coupler_insertion_db`` and ``ratio_deviation`` are recorded
    but already folded into ``eta_fiber`` and the balanced-detection ideal.
    """

    seed_power: float = 80e-6
    pump_power: float = 60e-3
    opa: OpaParams = field(default_factory=OpaParams)
    eta_fiber: float = 0.74
    eta_interference: float = 0.97
    eta_detector: float = 0.99
    lo_power: float = 5e-3
    balanced_coupler_insertion_db: float = 0.21
    ratio_deviation: float = 0.02
    phase_jitter_rms: float = 0.0
    eta_inject: float = 1.0
    wavelength: float = gs.DEFAULT_WAVELENGTH
    linewidth: float = 30e3

    def __post_init__(self):
        for name in ("eta_fiber", "eta_interference", "eta_detector", "eta_inject"):
            check_fraction(getattr(self, name), name)
        for name in ("seed_power", "pump_power", "lo_power", "phase_jitter_rms", "ratio_deviation"):
            check_nonnegative(getattr(self, name), name)

    @property
    def downstream_efficiency(self):
        return self.eta_fiber * self.eta_interference * self.eta_detector

    @property
    def total_efficiency(self):
        """Passive transmission from amplifier input to photocurrent."""
        return self.opa.eta_wg * self.downstream_efficiency

    def with_opa(self, **changes):
        return replace(self, opa=replace(self.opa, **changes))


def opa_transform(state, params, pump_power, seed_phase):
    """Propagate ``state`` through the double-pass amplifier.

    ``seed_phase`` is the angle of the first-pass squeezed quadrature
    relative to the x axis of ``state``; a seed displaced along x is
    deamplified at ``seed_phase = 0`` for a single pass.
    """
    r = params.rate(pump_power)
    out = gs.squeeze(state, r, seed_phase)
    out = gs.loss(out, params.eta_mid)
    out = gs.squeeze(out, r, np.asarray(seed_phase) + params.delta)
    n_ex = np.where(r > 0, params.n_pump, 0.0)
    if np.any(n_ex > 0):
        _, _, theta_min = gs.variance_extrema(out)
        out = gs.excess_noise(out, n_ex, theta_min + 0.5 * np.pi)
    eta_rest = np.asarray(params.eta_wg) / np.asarray(params.eta_mid)
    return gs.loss(out, np.minimum(eta_rest, 1.0))


def _bare_gain(params, pump_power, seed_phase):
    probe = gs.coherent(1.0)
    pumped = gs.power_of(opa_transform(probe, params, pump_power, seed_phase))
    return pumped / np.asarray(params.eta_wg)


def jitter_weight(sigma):
    """``<cos^2 e>`` for a zero-mean Gaussian phase ``e`` of rms ``sigma``."""
    return 0.5 * (1.0 + np.exp(-2.0 * np.asarray(sigma, dtype=float) ** 2))


def opa_power_gain(params, pump_power, seed_phase):
    """Output power normalised to the unpumped output at the same phase.

    The bare gain has the form ``A + B cos 2(phi - phi0)``, so averaging it
    over Gaussian seed-pump jitter is exactly a mix of the gains at
    ``phi`` and ``phi + pi/2`` with weight :func:`jitter_weight`.  The
    unpumped transmission is ``eta_wg`` at every phase, which fixes the
    normalisation.
    """
    c = jitter_weight(params.seed_jitter_rms)
    phi = np.asarray(seed_phase, dtype=float)
    return c * _bare_gain(params, pump_power, phi) + (1 - c) * _bare_gain(
        params, pump_power, phi + 0.5 * np.pi
    )


def gain_extrema(params, pump_power):
    """Return ``(gain_max, gain_min, phase_min)`` of :func:`opa_power_gain`.

    Exact: three probes fix the sinusoid ``A + Bc cos 2phi + Bs sin 2phi``.
    """
    g0 = _bare_gain(params, pump_power, 0.0)
    g45 = _bare_gain(params, pump_power, 0.25 * np.pi)
    g90 = _bare_gain(params, pump_power, 0.5 * np.pi)
    centre = 0.5 * (g0 + g90)
    bc, bs = 0.5 * (g0 - g90), g45 - centre
    swing = np.hypot(bc, bs) * np.exp(-2.0 * np.asarray(params.seed_jitter_rms) ** 2)
    phase_min = 0.5 * np.arctan2(bs, bc) + 0.5 * np.pi
    return centre + swing, centre - swing, np.mod(phase_min, np.pi)


def scan_gain_trace(params, pump_power, waveform: PhaseWaveform, n_samples, duration_s=None):
    """Gain versus time while the seed phase follows ``waveform``.

    Returns ``(t, gain)`` arrays over one waveform period unless
    ``duration_s`` is given.
    """
    if waveform is None:
        raise ValueError("a waveform is required for a gain scan")
    if n_samples < 2:
        raise ValueError(f"n_samples must be >= 2, got {n_samples}")
    duration = waveform.period if duration_s is None else duration_s
    t = np.linspace(0.0, duration, int(n_samples))
    return t, np.asarray(opa_power_gain(params, pump_power, waveform.phase(t)), dtype=float)


def inject_seed(cfg):
    """Seed coherent state as it enters the waveguide."""
    seed = gs.coherent(cfg.seed_power, cfg.wavelength, linewidth=cfg.linewidth)
    return gs.loss(seed, cfg.eta_inject)


def downstream_loss(state, cfg):
    """Fiber, interference and detection losses after the amplifier."""
    out = gs.loss(state, cfg.eta_fiber)
    out = gs.loss(out, cfg.eta_interference)
    return gs.loss(out, cfg.eta_detector)
