"""Phase-modulation waveforms driving the piezo fiber stretchers."""

from dataclasses import dataclass

import numpy as np

from .validation import check_nonnegative

SHAPES = ("triangle", "constant", "sawtooth")


@dataclass(frozen=True)
class PhaseWaveform:
    """Periodic phase drive, centred on ``offset``.

    ``amplitude`` is peak-to-peak in radians; triangle and sawtooth start at
    ``offset - amplitude / 2`` at ``t = 0``.
    """

    shape: str = "triangle"
    frequency: float = 5.0
    amplitude: float = 4 * np.pi
    offset: float = 0.0

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValueError(f"waveform shape must be one of {SHAPES}, got {self.shape!r}")
        check_nonnegative(self.amplitude, "amplitude")
        if self.shape != "constant" and not self.frequency > 0:
            raise ValueError(f"frequency must be > 0 for a {self.shape} waveform")

    @property
    def period(self):
        """One modulation period in s; 1 s for a constant drive."""
        return 1.0 if self.shape == "constant" else 1.0 / self.frequency

    def phase(self, t):
        t = np.asarray(t, dtype=float)
        if self.shape == "constant":
            unit = np.full_like(t, 0.5)
        else:
            frac = np.mod(t * self.frequency, 1.0)
            unit = frac if self.shape == "sawtooth" else 1.0 - np.abs(2.0 * frac - 1.0)
        return self.offset + self.amplitude * (unit - 0.5)
