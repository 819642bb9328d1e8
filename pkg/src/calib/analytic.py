"""Closed-form expected rates for the conditioned-rotation protocol.

These are the reference curves for the Monte Carlo engine and estimators.
The modulation depth of the conditioned D2 rate is ``epsilon * eta1``:
D1 can only fire on signal photons that survived the polarizing cube, so
``epsilon = 1`` gives the ideal textbook curve
``W2 = alpha*eta2*W0/2 * (1 - eta1*cos(2 theta))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from calib.model import ExperimentConfig


class VisibilityError(ValueError):
    pass


@dataclass(frozen=True)
class RateParams:
    W0: float
    eta1: float
    eta2: float
    alpha: float
    epsilon: float = 1.0

    def __post_init__(self):
        for name in ("eta1", "eta2", "alpha", "epsilon"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.W0 < 0:
            raise ValueError(f"W0 must be >= 0, got {self.W0}")

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "RateParams":
        return cls(
            W0=cfg.source.pair_rate_W0,
            eta1=cfg.d1.eta,
            eta2=cfg.d2.eta,
            alpha=cfg.channel.alpha_idler_transmittance,
            epsilon=cfg.channel.epsilon_signal_transmittance,
        )

    @property
    def heralded_fraction(self) -> float:
        """Probability that the signal of a V-signal pair is counted by D1."""
        return self.epsilon * self.eta1


def expected_rate_d2(theta_deg, p: RateParams, pc_enabled: bool):
    """Mean D2 count rate (counts/s) at polarizer angle ``theta_deg``.

    Accepts scalar or array angles. Without conditioning the curve is flat.
    """
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float))
    base = p.alpha * p.eta2 * p.W0 / 2.0
    if not pc_enabled:
        out = np.full_like(theta, base)
    else:
        out = base * (1.0 - p.heralded_fraction * np.cos(2.0 * theta))
    return out if out.ndim else float(out)


def expected_coincidence_rate(theta_deg, p: RateParams, pc_enabled: bool):
    """Mean D1-D2 coincidence rate (counts/s).

    D1 only fires on V signals, whose idlers are H; the conditioned
    rotation turns them to V, moving the maximum from 0 to 90 degrees.
    """
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float))
    scale = p.W0 / 2.0 * p.heralded_fraction * p.alpha * p.eta2
    out = scale * (np.sin(theta) ** 2 if pc_enabled else np.cos(theta) ** 2)
    return out if out.ndim else float(out)


def visibility_from_extrema(w_max: float, w_min: float) -> float:
    """(max - min) / (max + min) of a modulated rate curve."""
    if w_min > w_max:
        raise VisibilityError(f"w_min ({w_min}) exceeds w_max ({w_max}); arguments swapped?")
    if w_min < 0:
        raise VisibilityError(f"rates must be non-negative, got w_min={w_min}")
    total = w_max + w_min
    if total <= 0:
        raise VisibilityError("visibility undefined for an all-zero curve")
    return (w_max - w_min) / total


def curve_visibility(theta_deg, p: RateParams) -> float:
    """Visibility of the conditioned D2 curve from its analytic extrema."""
    w = np.asarray(expected_rate_d2(theta_deg, p, True))
    return visibility_from_extrema(float(w.max()), float(w.min()))
