"""Efficiency estimation from count records.

Conditioned-rotation chain: background estimate and subtraction, weighted
least-squares fit of ``W2(theta) = W_A cos(2 theta) + W_B``, visibility
``|W_A| / W_B``, then division by the dead-time and polarizer-loss factors.
The coincidence-ratio (Klyshko) estimator is provided as an independent
cross-check. All uncertainty propagation is first order with independent
inputs.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from calib.model import CountRecord, ExperimentConfig, Quantity


class FitError(ValueError):
    pass


class SingularFitError(FitError):
    pass


class NegativeCountWarning(UserWarning):
    pass


class Method(str, enum.Enum):
    CONDITIONED_VISIBILITY = "conditioned_visibility"
    KLYSHKO = "klyshko"


@dataclass(frozen=True)
class CorrectionFactor(Quantity):
    """A multiplicative correction; ``source`` is ``"model"`` or ``"external"``."""

    source: str = "model"


@dataclass(frozen=True)
class FitResult:
    W_A: float
    W_B: float
    covariance: np.ndarray
    chi2: float
    dof: int

    @property
    def u_W_A(self) -> float:
        return math.sqrt(self.covariance[0, 0])

    @property
    def u_W_B(self) -> float:
        return math.sqrt(self.covariance[1, 1])

    @property
    def amplitude_sign(self) -> int:
        """-1 when the curve has its minimum at theta = 0, as expected for
        conditioned rotation."""
        return int(np.sign(self.W_A))

    def to_dict(self) -> dict:
        return {
            "W_A": self.W_A,
            "W_B": self.W_B,
            "covariance": self.covariance.tolist(),
            "chi2": self.chi2,
            "dof": self.dof,
            "chi2_per_dof": self.chi2 / self.dof,
        }


@dataclass(frozen=True)
class EfficiencyEstimate:
    method: Method
    eta1: Quantity
    visibility: Optional[Quantity] = None
    corrections: tuple[tuple[str, Quantity], ...] = ()
    fit: Optional[FitResult] = None

    def __post_init__(self):
        if not 0.0 <= self.eta1.value <= 1.05:
            raise ValueError(f"eta1 = {self.eta1.value} outside [0, 1.05]")
        if self.method is Method.CONDITIONED_VISIBILITY and not self.corrections:
            raise ValueError("conditioned estimate needs its correction trail")

    def to_dict(self) -> dict:
        out = {
            "method": self.method.value,
            "eta1": self.eta1.to_dict(),
            "visibility": None if self.visibility is None else self.visibility.to_dict(),
            "corrections": [
                {"name": name, **q.to_dict(), "source": getattr(q, "source", "model")}
                for name, q in self.corrections
            ],
        }
        if self.fit is not None:
            out["fit"] = self.fit.to_dict()
        return out


@dataclass(frozen=True)
class Comparison:
    difference: float
    combined_u: float
    E_n: float
    agree: bool

    def to_dict(self) -> dict:
        return {
            "difference": self.difference,
            "combined_u": self.combined_u,
            "E_n": self.E_n,
            "agree": self.agree,
        }


# ---------------------------------------------------------------- background

def estimate_background(bg_records: Sequence[CountRecord]) -> Quantity:
    """Pooled D2 rate of pump-off records, with Poisson uncertainty."""
    total_t = sum(r.duration for r in bg_records)
    if total_t <= 0:
        raise ValueError("background records have zero total duration")
    counts = sum(r.n2 for r in bg_records)
    return Quantity(counts / total_t, math.sqrt(counts) / total_t)


def subtract_background(rec: CountRecord, background: Quantity) -> Quantity:
    """Background-free D2 counts of ``rec``.

    Negative results are kept (the estimator stays unbiased) and reported
    with a :class:`NegativeCountWarning`.
    """
    if background.value < 0:
        raise ValueError("background rate must be >= 0")
    b = background.value * rec.duration
    ub = background.std_uncertainty * rec.duration
    value = rec.n2 - b
    if value < 0:
        warnings.warn(
            f"background-corrected count negative at theta={rec.theta_deg}: {value:.1f}",
            NegativeCountWarning,
            stacklevel=2,
        )
    return Quantity(value, math.sqrt(rec.n2 + ub * ub))


# ---------------------------------------------------------------- fit

def fit_modulation(theta_deg, y, sigma=None) -> FitResult:
    """Weighted least-squares fit of ``y = W_A cos(2 theta) + W_B``.

    ``sigma`` defaults to ``sqrt(max(y, 1))``. Angles are taken as exact.
    The covariance is ``(X^T W X)^-1`` with absolute weights.
    """
    theta = np.asarray(theta_deg, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if theta.size != y.size:
        raise FitError("theta and y differ in length")
    if y.size < 3:
        raise FitError(f"need at least 3 points, got {y.size}")
    if np.unique(theta).size < 3:
        raise FitError("need at least 3 distinct angles")
    if sigma is None:
        sigma = np.sqrt(np.maximum(y, 1.0))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    if np.any(~(sigma > 0)):
        raise FitError("all sigma must be positive")

    c = np.cos(2.0 * np.deg2rad(theta))
    if np.ptp(c) < 1e-9:
        raise SingularFitError("cos(2 theta) is constant over the angles; amplitude not identifiable")
    X = np.column_stack([c, np.ones_like(c)])
    w = 1.0 / sigma**2
    normal = X.T @ (X * w[:, None])
    cov = np.linalg.inv(normal)
    params = cov @ (X.T @ (w * y))
    resid = y - X @ params
    chi2 = float(np.sum(w * resid**2))
    return FitResult(float(params[0]), float(params[1]), cov, chi2, y.size - 2)


def fit_sinusoid(theta_deg, y, sigma=None) -> tuple[np.ndarray, np.ndarray]:
    """Weighted fit of ``y = a + b cos(2 theta) + c sin(2 theta)``.

    Returns ``(params, covariance)``; see :func:`phase_deg` for the
    location of the maximum.
    """
    theta = np.deg2rad(np.asarray(theta_deg, dtype=float).ravel())
    y = np.asarray(y, dtype=float).ravel()
    if y.size < 4:
        raise FitError("need at least 4 points")
    if sigma is None:
        sigma = np.sqrt(np.maximum(y, 1.0))
    w = 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), y.shape) ** 2
    X = np.column_stack([np.ones_like(theta), np.cos(2 * theta), np.sin(2 * theta)])
    normal = X.T @ (X * w[:, None])
    if np.linalg.cond(normal) > 1e12:
        raise SingularFitError("angles do not resolve the phase")
    cov = np.linalg.inv(normal)
    return cov @ (X.T @ (w * y)), cov


def phase_deg(params) -> float:
    """Angle in [0, 180) at which a fitted sinusoid peaks."""
    _, b, c = params
    return float(np.mod(np.rad2deg(np.arctan2(c, b)) / 2.0, 180.0))


def visibility_from_fit(fit: FitResult) -> Quantity:
    """``|W_A| / W_B`` with uncertainty from the full covariance."""
    if fit.W_B <= 0:
        raise FitError(f"mean level W_B must be positive, got {fit.W_B}")
    a, b = fit.W_A, fit.W_B
    v = abs(a) / b
    grad = np.array([math.copysign(1.0, a) / b if a else 1.0 / b, -abs(a) / b**2])
    var = float(grad @ fit.covariance @ grad)
    return Quantity(v, math.sqrt(max(var, 0.0)))


def fit_records(records: Sequence[CountRecord], background: Optional[Quantity] = None) -> FitResult:
    """Fit D2 rates (counts/s) of ``records``, background subtracted when given."""
    theta = np.array([r.theta_deg for r in records])
    dur = np.array([r.duration for r in records])
    if background is None:
        counts = np.array([r.n2 for r in records], dtype=float)
        sigma = np.sqrt(np.maximum(counts, 1.0))
    else:
        corrected = [subtract_background(r, background) for r in records]
        counts = np.array([q.value for q in corrected])
        sigma = np.array([max(q.std_uncertainty, 1.0) for q in corrected])
    return fit_modulation(theta, counts / dur, sigma / dur)


# ---------------------------------------------------------------- corrections

def dead_time_correction_factor(
    W1: float, tau: float, external: Optional[Quantity] = None
) -> CorrectionFactor:
    """Fraction of D1 triggers a non-paralyzable driver accepts.

    ``W1`` is the Poisson trigger rate offered to the driver. The model value
    is ``1 / (1 + W1 tau)`` with no model uncertainty. A measured factor
    passed as ``external`` is returned unchanged, tagged as such.
    """
    if external is not None:
        return CorrectionFactor(external.value, external.std_uncertainty, source="external")
    if W1 < 0 or tau < 0:
        raise ValueError("W1 and tau must be non-negative")
    return CorrectionFactor(1.0 / (1.0 + W1 * tau), 0.0, source="model")


def detector_live_fraction(measured_rate: float, tau: float) -> CorrectionFactor:
    """Live fraction ``1 - m tau`` of a non-paralyzable detector whose
    *registered* rate is ``m``; equals ``1 / (1 + W tau)`` for the true
    rate ``W``."""
    if measured_rate * tau >= 1:
        raise ValueError("registered rate saturates the dead time")
    return CorrectionFactor(1.0 - measured_rate * tau, 0.0, source="model")


def _quadrature_quotient(numerator: Quantity, factors: Iterable[Quantity]) -> Quantity:
    value = numerator.value
    rel2 = (numerator.std_uncertainty / numerator.value) ** 2 if numerator.value else 0.0
    for f in factors:
        if not f.value > 0:
            raise ValueError(f"correction factors must be positive, got {f.value}")
        value /= f.value
        rel2 += (f.std_uncertainty / f.value) ** 2
    return Quantity(value, abs(value) * math.sqrt(rel2))


def eta_from_visibility(
    V: Quantity,
    delta: Quantity,
    eps: Quantity,
    extra: Sequence[tuple[str, Quantity]] = (),
    fit: Optional[FitResult] = None,
) -> EfficiencyEstimate:
    """Efficiency ``V / (delta * eps)`` with the correction trail.

    ``extra`` holds further named multiplicative factors that divide the
    visibility in the same way.
    """
    for name, q in (("visibility", V), ("dead_time", delta), ("polarizer_loss", eps)):
        if not 0.0 < q.value <= 1.0:
            raise ValueError(f"{name} must lie in (0, 1], got {q.value}")
    trail = (("dead_time", delta), ("polarizer_loss", eps), *tuple(extra))
    if V.value > 1.05 * math.prod(q.value for _, q in trail):
        raise ValueError("visibility exceeds what the corrections allow")
    eta = _quadrature_quotient(V, [q for _, q in trail])
    return EfficiencyEstimate(Method.CONDITIONED_VISIBILITY, eta, V, trail, fit)


def pump_drift_normalize(
    records: Sequence[CountRecord],
    reference_W1: float,
    background: Optional[Quantity] = None,
) -> list[CountRecord]:
    """Rescale D2 and coincidence counts to a common D1 rate.

    D1 singles track the pump power, so each record is scaled by
    ``reference_W1 * duration / n1``. With ``background`` given, only the
    pair-induced part of ``n2`` is rescaled. Counts are rounded to integers.
    """
    out = []
    for r in records:
        if r.n1 <= 0:
            raise ValueError(f"record at theta={r.theta_deg} has n1 = 0")
        s = reference_W1 * r.duration / r.n1
        b = 0.0 if background is None else background.value * r.duration
        n2 = max(int(round((r.n2 - b) * s + b)), 0)
        n1 = int(round(reference_W1 * r.duration))
        nc = min(int(round(r.nc * s)), n1, n2)
        out.append(CountRecord(r.theta_deg, r.duration, n1, n2, nc, r.pc_enabled, r.seed))
    return out


def d2_dead_time_bound(
    cfg: ExperimentConfig, theta_list, duration: float, base_seed: int
) -> CorrectionFactor:
    """Model-uncertainty line for the D2 dead time.

    Paired sweeps (same seeds) with and without ``d2.dead_time`` bound the
    relative visibility change it causes; the factor is ``1 ± |1 - ratio|``.
    """
    from calib.simulate import sweep

    with_dt = fit_records(sweep(cfg, theta_list, duration, base_seed))
    without = fit_records(sweep(cfg.replace(d2__dead_time=0.0), theta_list, duration, base_seed))
    ratio = visibility_from_fit(with_dt).value / visibility_from_fit(without).value
    return CorrectionFactor(1.0, abs(1.0 - ratio), source="model")


# ---------------------------------------------------------------- Klyshko

def eta_klyshko(
    records: Sequence[CountRecord],
    eps: Quantity,
    dead_time_corrections: Sequence[tuple[str, Quantity]] = (),
    background: Optional[Quantity] = None,
) -> EfficiencyEstimate:
    """Coincidence-ratio estimate ``sum(nc) / sum(n2)`` corrected for the
    cube transmittance and dead times.

    Records must be taken without conditioning with the polarizer at 0
    degrees, where every transmitted idler heralds a V signal.
    """
    if any(r.pc_enabled for r in records):
        raise ValueError("Klyshko records must be taken with the Pockels cell disabled")
    if any(abs(math.remainder(r.theta_deg, 180.0)) > 1e-9 for r in records):
        raise ValueError("Klyshko records must be taken at theta = 0 (mod 180)")
    nc = sum(r.nc for r in records)
    n2 = float(sum(r.n2 for r in records))
    total_t = sum(r.duration for r in records)
    if background is not None:
        n2 -= background.value * total_t
    if n2 <= 0:
        raise ValueError("no heralding counts")
    raw = nc / n2
    u2 = raw * (1.0 - raw) / n2 if 0 <= raw <= 1 else raw / n2
    if background is not None:
        u2 += (raw * total_t * background.std_uncertainty / n2) ** 2
    raw_q = Quantity(raw, math.sqrt(max(u2, 0.0)))
    trail = (("polarizer_loss", eps), *tuple(dead_time_corrections))
    value = raw
    rel2 = (raw_q.std_uncertainty / raw) ** 2 if raw else 0.0
    for _, q in trail:
        value /= q.value
        rel2 += (q.std_uncertainty / q.value) ** 2
    eta = Quantity(value, abs(value) * math.sqrt(rel2) if raw else raw_q.std_uncertainty)
    return EfficiencyEstimate(Method.KLYSHKO, eta, None, trail)


def compare_methods(est_a: EfficiencyEstimate, est_b: EfficiencyEstimate, limit: float = 2.0) -> Comparison:
    """Normalized error ``E_n = |a - b| / sqrt(u_a^2 + u_b^2)``."""
    diff = est_a.eta1.value - est_b.eta1.value
    u = math.hypot(est_a.eta1.std_uncertainty, est_b.eta1.std_uncertainty)
    if u == 0:
        en = 0.0 if diff == 0 else math.inf
    else:
        en = abs(diff) / u
    return Comparison(diff, u, en, en <= limit)


def report(
    estimates: Sequence[EfficiencyEstimate],
    background: Optional[Quantity] = None,
) -> dict:
    """JSON-ready report; adds a comparison block for two estimates."""
    out: dict = {"estimates": [e.to_dict() for e in estimates]}
    if background is not None:
        out["background"] = background.to_dict()
    if len(estimates) == 2:
        out["comparison"] = compare_methods(estimates[0], estimates[1]).to_dict()
    return out
