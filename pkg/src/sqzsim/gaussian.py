"""Single-mode Gaussian states in shot-noise units.

A state is a quadrature mean ``(x, p)`` and a 2x2 covariance matrix, with the
vacuum variance normalised to 1.  Every operation here is a pure function
returning a new :class:`QuadratureState`.

All operations broadcast: ``mean`` may have shape ``(..., 2)`` and ``cov``
shape ``(..., 2, 2)``, and scalar parameters (``r``, ``phi``, ``eta``...) may
be arrays matching the leading batch shape.  The inference grid relies on
this to evaluate millions of chains without a Python loop.

Power convention: ``|mean|**2 = P`` with the proportionality constant fixed
to 1, so the amplitude is carried in sqrt(W).  Only power ratios are ever
physically meaningful; the wavelength is kept as metadata.
"""

from dataclasses import dataclass

import numpy as np

from .validation import check_fraction, check_nonnegative

DEFAULT_WAVELENGTH = 1550e-9


@dataclass(frozen=True, eq=False)
class QuadratureState:
    """Gaussian state: mean vector and covariance in shot-noise units.

    Args:
        mean: quadrature means, shape ``(..., 2)``.  Amplitudes are in
            sqrt(W) so that ``power_of`` returns watts.
        cov: symmetric positive-definite covariance, shape ``(..., 2, 2)``.
        wavelength: carrier wavelength in m (metadata).
        linewidth: optical linewidth in Hz (metadata, never transformed).
    """

    mean: np.ndarray
    cov: np.ndarray
    wavelength: float = DEFAULT_WAVELENGTH
    linewidth: float | None = None

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape[-1:] != (2,) or cov.shape[-2:] != (2, 2):
            raise ValueError(
                f"expected mean (..., 2) and cov (..., 2, 2), got {mean.shape} and {cov.shape}"
            )
        cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
        if np.any(cov[..., 0, 0] <= 0) or np.any(_det(cov) <= 0):
            raise ValueError("covariance matrix must be positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def batch_shape(self):
        return self.cov.shape[:-2]

    @property
    def power(self):
        return power_of(self)

    def det(self):
        return _det(self.cov)

    def is_physical(self, tol=1e-9):
        """Heisenberg bound ``det(cov) >= 1`` within ``tol``."""
        return bool(np.all(self.det() >= 1.0 - tol))

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.mean, other.mean, atol=atol) and np.allclose(
            self.cov, other.cov, atol=atol
        )


def _det(cov):
    return cov[..., 0, 0] * cov[..., 1, 1] - cov[..., 0, 1] * cov[..., 1, 0]


def _evolve(state, mean, cov):
    # results of the operations below are valid by construction
    out = object.__new__(QuadratureState)
    for name, value in (("mean", mean), ("cov", cov), ("wavelength", state.wavelength), ("linewidth", state.linewidth)):
        object.__setattr__(out, name, value)
    return out


def rotation(theta):
    """Rotation matrix ``R(theta)``; broadcasts over array ``theta``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def squeezer(r, phi):
    """Symplectic matrix ``R(phi) diag(e^-r, e^r) R(-phi)``.

    The quadrature at angle ``phi`` is deamplified by ``e^-r``.
    """
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ch, sh = np.cosh(r), np.sinh(r)
    c2, s2 = np.cos(2 * phi), np.sin(2 * phi)
    return np.stack(
        [np.stack([ch - sh * c2, -sh * s2], -1), np.stack([-sh * s2, ch + sh * c2], -1)], -2
    )


def apply_symplectic(state, matrix):
    matrix = np.asarray(matrix, dtype=float)
    mean = np.einsum("...ij,...j->...i", matrix, state.mean)
    cov = matrix @ state.cov @ np.swapaxes(matrix, -1, -2)
    return _evolve(state, mean, cov)


def vacuum(wavelength=DEFAULT_WAVELENGTH, linewidth=None):
    return QuadratureState(np.zeros(2), np.eye(2), wavelength, linewidth)


def coherent(power_watts, wavelength=DEFAULT_WAVELENGTH, phase=0.0, linewidth=None):
    """Coherent state of the given optical power, displaced along ``phase``."""
    power = check_nonnegative(power_watts, "power_watts")
    amp = np.sqrt(power)
    phase = np.asarray(phase, dtype=float)
    mean = np.stack(np.broadcast_arrays(amp * np.cos(phase), amp * np.sin(phase)), -1)
    cov = np.broadcast_to(np.eye(2), mean.shape[:-1] + (2, 2)).copy()
    return QuadratureState(mean, cov, wavelength, linewidth)


def squeeze(state, r, phi):
    """Squeeze the quadrature at angle ``phi`` by ``e^-r`` (variance ``e^-2r``)."""
    check_nonnegative(r, "r")
    return apply_symplectic(state, squeezer(r, phi))


def phase_rotate(state, theta):
    return apply_symplectic(state, rotation(theta))


def loss(state, eta):
    """Pure-loss channel of power transmission ``eta``."""
    eta = np.asarray(check_fraction(eta, "eta"), dtype=float)
    mean = np.sqrt(eta)[..., None] * state.mean
    cov = eta[..., None, None] * state.cov + (1.0 - eta)[..., None, None] * np.eye(2)
    return _evolve(state, mean, cov)


def excess_noise(state, n_ex, theta):
    """Add variance ``n_ex`` along the quadrature axis at angle ``theta``."""
    n_ex = np.asarray(check_nonnegative(n_ex, "n_ex"), dtype=float)
    theta = np.asarray(theta, dtype=float)
    u = np.stack([np.cos(theta), np.sin(theta)], -1)
    cov = state.cov + n_ex[..., None, None] * (u[..., :, None] * u[..., None, :])
    return _evolve(state, state.mean, cov)


def measure_variance(state, theta):
    """Variance of the quadrature ``x cos(theta) + p sin(theta)``."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    cov = state.cov
    return c * c * cov[..., 0, 0] + 2 * c * s * cov[..., 0, 1] + s * s * cov[..., 1, 1]


def variance_extrema(state):
    """Return ``(v_min, v_max, theta_min)`` from the closed-form eigensystem.

    ``theta_min`` is the quadrature angle of the smaller variance (defined
    modulo pi).
    """
    a, d, b = state.cov[..., 0, 0], state.cov[..., 1, 1], state.cov[..., 0, 1]
    centre = 0.5 * (a + d)
    radius = np.hypot(0.5 * (a - d), b)
    theta_max = 0.5 * np.arctan2(2 * b, a - d)
    return centre - radius, centre + radius, theta_max + 0.5 * np.pi


def to_db(variance):
    v = np.asarray(variance, dtype=float)
    if np.any(~(v > 0)):
        raise ValueError(f"variance must be > 0 for dB conversion, got {variance!r}")
    out = 10.0 * np.log10(v)
    return float(out) if out.ndim == 0 else out


def from_db(value_db):
    out = 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def power_of(state, wavelength=None):
    """Optical power in W carried by the coherent amplitude.

    ``wavelength`` is accepted for symmetry with :func:`coherent`; with the
    unit proportionality constant it does not enter the result.
    """
    p = np.sum(state.mean**2, axis=-1)
    return float(p) if p.ndim == 0 else p
