"""Linear stability domains, stiffness ratios and energy/Lyapunov monitors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigError, l2_norm

METHODS = ("FE", "BE", "CN", "DOPRI5")
STIFF_THRESHOLD = 1e3


def dopri5_poly_high(z):
    """Amplification factor of the propagated 5th-order DOPRI5 solution."""
    z = np.asarray(z, dtype=complex)
    return sum(z ** r / math.factorial(r) for r in range(6)) + z ** 6 / 600


def dopri5_poly_low(z):
    """Amplification factor of the embedded DOPRI5 solution."""
    z = np.asarray(z, dtype=complex)
    return (sum(z ** r / math.factorial(r) for r in range(5))
            + 1097 * z ** 5 / 120000 + 161 * z ** 6 / 120000 + z ** 7 / 24000)


def _magnitudes(method, z):
    z = np.asarray(z, dtype=complex)
    if method == "FE":
        return (np.abs(1 + z),)
    if method == "BE":
        return (np.abs(1 - z),)
    if method == "CN":
        with np.errstate(divide="ignore", invalid="ignore"):
            return (np.abs((1 + z / 2) / (1 - z / 2)),)
    if method == "DOPRI5":
        return (np.abs(dopri5_poly_high(z)), np.abs(dopri5_poly_low(z)))
    raise ConfigError(f"unknown method {method!r}; choose from {METHODS}")


def stability_mask(method: str, z):
    """Vectorized membership test; boundary points count as outside."""
    method = method.upper()
    mags = _magnitudes(method, z)
    if method == "BE":
        return mags[0] > 1
    inside = np.ones(np.shape(z), dtype=bool)
    for m in mags:
        inside &= np.isfinite(m) & (m < 1)
    return inside


@dataclass
class StabilityVerdict:
    method: str
    z: complex
    inside: bool
    magnitudes: tuple
    pole: bool = False


def in_stability_domain(method: str, z) -> StabilityVerdict:
    """Table-style membership of ``z = s * lambda`` for FE, BE, CN or DOPRI5.

    FE: ``|1 + z| < 1``; BE: ``|1 - z| > 1``; CN: ``|(1 + z/2)/(1 - z/2)| < 1``;
    DOPRI5: both amplification polynomials below 1 in modulus.
    """
    method = method.upper()
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ConfigError("z must be finite")
    pole = method == "CN" and z == 2
    mags = tuple(float(m) for m in _magnitudes(method, z))
    inside = bool(stability_mask(method, z)) and not pole
    return StabilityVerdict(method, z, inside, mags, pole)


def rasterize_domain(method: str, re_range=(-5.0, 1.0), im_range=(-4.0, 4.0),
                     resolution=(121, 161)):
    """Rows of ``(re, im, inside)`` over a rectangular grid."""
    if np.isscalar(resolution):
        resolution = (int(resolution), int(resolution))
    re = np.linspace(*re_range, int(resolution[0]))
    im = np.linspace(*im_range, int(resolution[1]))
    RE, IM = np.meshgrid(re, im, indexing="xy")
    mask = stability_mask(method, RE + 1j * IM)
    return [(float(a), float(b), bool(c))
            for a, b, c in zip(RE.ravel(), IM.ravel(), mask.ravel())]


def stiffness_ratio(eigen_real_parts) -> float:
    """``max |Re lambda| / min |Re lambda|``; ``inf`` when a zero mode is present.

    Positive real parts violate the decaying-spectrum assumption and are
    rejected.
    """
    re = np.asarray(eigen_real_parts, dtype=float).ravel()
    if re.size == 0:
        raise ConfigError("empty spectrum")
    if np.any(re > 0):
        raise ConfigError("stiffness ratio assumes Re(lambda) <= 0")
    mags = np.abs(re)
    lo = mags.min()
    if lo == 0:
        return math.inf
    return float(mags.max() / lo)


def is_stiff(ratio: float, threshold: float = STIFF_THRESHOLD) -> bool:
    return ratio >= threshold


@dataclass
class EnergyReport:
    values: np.ndarray
    deltas: np.ndarray
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _slack_array(slack, n):
    arr = np.broadcast_to(np.asarray(slack, dtype=float), (n,))
    return arr


def energy_monitor(states, potential, slack=0.0) -> EnergyReport:
    """``F`` along a trajectory and the steps where it rises by more than ``slack``.

    ``slack`` is a scalar or one value per step; use :func:`inner_slack` for
    the ``10 * tol * |f(h_{k+1})|`` convention.
    """
    values = np.array([float(potential(h)) for h in states])
    deltas = np.diff(values)
    sl = _slack_array(slack, deltas.size)
    violations = [int(k) for k in np.nonzero(deltas > sl)[0]]
    return EnergyReport(values, deltas, violations)


def inner_slack(rhs_values, tol, factor=10.0):
    """Per-step slack ``factor * tol * |f(h_{k+1})|`` from rhs values at ``h_1..h_n``."""
    return np.array([factor * tol * l2_norm(f) for f in rhs_values])


def bdf2_lyapunov(h_next, h_k, s, potential):
    """``F(h_{k+1}) + |h_{k+1} - h_k|^2 / (4 s)``; nonincreasing along BDF2 runs."""
    d = np.asarray(h_next) - np.asarray(h_k)
    return float(potential(h_next)) + float(np.dot(d, d)) / (4.0 * s)


def cn_lyapunov(h_next, h_k, rhs_at_hk, potential):
    """``F(h_{k+1}) + <h_{k+1} - h_k, grad F(h_k)>`` with ``grad F(h_k) = -f(h_k)``.

    A Crank-Nicolson step satisfies ``cn_lyapunov(...) <= F(h_k)``.
    """
    d = np.asarray(h_next) - np.asarray(h_k)
    return float(potential(h_next)) - float(np.dot(d, rhs_at_hk))


def lyapunov_violations(before, after, slack=0.0):
    """Indices ``k`` where ``after[k] > before[k] + slack[k]``."""
    before = np.asarray(before, dtype=float)
    after = np.asarray(after, dtype=float)
    sl = _slack_array(slack, before.size)
    return [int(k) for k in np.nonzero(after > before + sl)[0]]
