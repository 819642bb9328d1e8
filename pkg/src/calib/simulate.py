"""Seedable Monte Carlo engine for the conditioned-rotation protocol.

One run simulates a single polarizer setting. Each arm is generated as its
own event stream and the streams are combined in time order; coupling only
runs D1 -> Pockels driver -> idler, so no global event queue is needed.

Randomness: the run seed is expanded with ``numpy.random.SeedSequence`` into
independent child streams (pairs, D1 efficiency, D1 darks, idler arm, D2
background). The D1 side never consumes randomness that depends on the
Pockels settings, so switching the cell on or off leaves D1 untouched.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from calib import kernels
from calib.model import (
    CountRecord,
    Drift,
    ExperimentConfig,
    PockelsModel,
    Polarization,
    validate_config,
)

# trailing window over which the driver's rate limiter counts triggers
RATE_WINDOW = 1.0

SeedLike = Union[int, np.random.Generator, None]


@dataclass(frozen=True)
class PairEvent:
    t: float
    signal_pol: Polarization
    idler_pol: Polarization

    def __post_init__(self):
        if self.idler_pol is not self.signal_pol.flip():
            raise ValueError("type-II pairs are orthogonally polarized")


class PairEvents(Sequence):
    """Pair emissions stored column-wise.

    ``t`` holds sorted emission times and ``signal_v`` marks pairs whose
    signal photon is vertical (idler horizontal). Indexing yields
    :class:`PairEvent` objects.
    """

    def __init__(self, t: np.ndarray, signal_v: np.ndarray):
        self.t = t
        self.signal_v = signal_v

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i):
        if isinstance(i, slice):
            return PairEvents(self.t[i], self.signal_v[i])
        sig = Polarization.V if self.signal_v[i] else Polarization.H
        return PairEvent(float(self.t[i]), sig, sig.flip())


@dataclass(frozen=True)
class EventTimeline:
    """Detection history of one run.

    ``pockels_triggers`` are the D1 hit times the driver accepted; the
    electronic delay and rise time are applied when the flip window is
    evaluated, see :func:`pockels_flip_decision`.
    """

    d1_hits: np.ndarray
    pockels_triggers: np.ndarray
    d2_hits: np.ndarray
    inhibit_intervals: tuple[tuple[float, float], ...]
    flips: int = 0
    accidental_flips: int = 0


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _poisson_times(rate: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    if rate <= 0 or duration <= 0:
        return np.empty(0)
    n = rng.poisson(rate * duration)
    return np.sort(rng.uniform(0.0, duration, n))


def generate_pair_events(
    W0: float,
    duration: float,
    drift: Optional[Drift] = None,
    seed: SeedLike = None,
    t_start: float = 0.0,
) -> PairEvents:
    """Poisson pair emissions over ``[0, duration)``.

    ``drift`` scales the rate by ``drift(t_start + duration / 2)``, a single
    factor per run. Each pair is (signal V, idler H) or (signal H, idler V)
    with equal probability.
    """
    if W0 < 0 or duration < 0:
        raise ValueError("W0 and duration must be non-negative")
    rng = _rng(seed)
    rate = W0 * (1.0 if drift is None else drift(t_start + duration / 2.0))
    if rate < 0:
        raise ValueError(f"drifted pair rate is negative ({rate})")
    t = _poisson_times(rate, duration, rng)
    signal_v = rng.random(t.size) < 0.5
    return PairEvents(t, signal_v)


def apply_dead_time(times, tau: float, paralyzable: bool = False) -> np.ndarray:
    """Return the events a detector with dead time ``tau`` registers."""
    times = np.asarray(times, dtype=np.float64)
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise ValueError("event times must be sorted")
    if tau < 0:
        raise ValueError("dead time must be >= 0")
    f = kernels.paralyzable_mask if paralyzable else kernels.nonparalyzable_mask
    return times[f(times, tau)]


def pockels_flip_decision(trigger_times, arrival: float, pc: PockelsModel) -> bool:
    """Whether a photon reaching the cell at ``arrival`` sees the flat top of
    a pulse started by one of ``trigger_times``."""
    trig = np.asarray(trigger_times, dtype=np.float64)
    lo, hi = pc.flip_window
    return bool(kernels.flip_mask(np.array([arrival], dtype=np.float64), trig, lo, hi)[0])


def _count_foreign(times: np.ndarray, triggers: np.ndarray) -> int:
    """Number of ``times`` that are not themselves trigger times."""
    if triggers.size == 0:
        return int(times.size)
    k = np.minimum(np.searchsorted(triggers, times), triggers.size - 1)
    return int(np.count_nonzero(triggers[k] != times))


def _streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)]


def simulate_timeline(
    cfg: ExperimentConfig,
    theta_deg: float,
    duration: float,
    seed: int,
    t_start: float = 0.0,
) -> tuple[CountRecord, EventTimeline]:
    """Run the full cascade once and return the record with its timeline.

    ``t_start`` is the lab time at which the run begins; it only matters
    when the source has a pump drift.
    """
    validate_config(cfg)
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    src, ch, pc = cfg.source, cfg.channel, cfg.pockels
    g_pair, g_d1, g_dark1, g_idler, g_bg = _streams(seed)

    pairs = generate_pair_events(src.pair_rate_W0, duration, src.pump_drift, g_pair, t_start)
    n = len(pairs)

    # signal arm: only V photons pass the cube
    fired = pairs.signal_v & (g_d1.random(n) < ch.epsilon_signal_transmittance * cfg.d1.eta)
    dark1 = _poisson_times(src.dark_rate_D1, duration, g_dark1)
    d1_raw = np.sort(np.concatenate([pairs.t[fired], dark1]), kind="stable")
    d1_hits = apply_dead_time(d1_raw, cfg.d1.dead_time, cfg.d1.paralyzable)

    if pc.enabled:
        accepted, inhibit_starts = kernels.driver_accept(
            d1_hits, pc.driver_dead_time, pc.rate_limit, RATE_WINDOW, pc.inhibit_duration
        )
        triggers = d1_hits[accepted]
    else:
        triggers = np.empty(0)
        inhibit_starts = np.empty(0)

    # idler arm
    arrival = pairs.t + ch.fiber_delay
    pol = np.where(pairs.signal_v, 0.0, 90.0) + ch.fiber_misalignment_angle
    lo, hi = pc.flip_window
    flipped = kernels.flip_mask(arrival, triggers, lo, hi)
    # half-wave plate at 45 degrees mirrors the polarization about 45 degrees
    pol = np.where(flipped, 90.0 - pol, pol)
    p_det = np.cos(np.deg2rad(theta_deg - pol)) ** 2 * (ch.alpha_idler_transmittance * cfg.d2.eta)
    detected = g_idler.random(n) < p_det
    bg = _poisson_times(src.background_rate_D2 + src.dark_rate_D2, duration, g_bg)
    d2_raw = np.sort(np.concatenate([arrival[detected], bg]), kind="stable")
    d2_hits = apply_dead_time(d2_raw, cfg.d2.dead_time, cfg.d2.paralyzable)

    nc = kernels.match_coincidences(d1_hits, d2_hits, ch.fiber_delay, cfg.coincidence_window / 2.0)
    record = CountRecord(
        theta_deg=float(theta_deg),
        duration=float(duration),
        n1=int(d1_hits.size),
        n2=int(d2_hits.size),
        nc=int(nc),
        pc_enabled=pc.enabled,
        seed=int(seed),
    )
    timeline = EventTimeline(
        d1_hits=d1_hits,
        pockels_triggers=triggers,
        d2_hits=d2_hits,
        inhibit_intervals=tuple((float(s), float(s + pc.inhibit_duration)) for s in inhibit_starts),
        flips=int(flipped.sum()),
        # flipped idlers whose own partner did not trigger the driver
        accidental_flips=_count_foreign(pairs.t[flipped], triggers),
    )
    return record, timeline


def simulate_run(
    cfg: ExperimentConfig,
    theta_deg: float,
    duration: float,
    seed: int,
    t_start: float = 0.0,
) -> CountRecord:
    """Counts of one acquisition; bit-identical for identical arguments."""
    return simulate_timeline(cfg, theta_deg, duration, seed, t_start)[0]


def derive_seed(base_seed: int, index: int, stream: int = 0) -> int:
    """Deterministic 64-bit seed for the ``index``-th record of a sweep.

    Different ``stream`` values give unrelated seed sequences, e.g. for a
    background acquisition that must not share noise with the main sweep.
    """
    state = np.random.SeedSequence([int(base_seed), int(stream), int(index)]).generate_state(1, np.uint64)
    return int(state[0])


def sweep(
    cfg: ExperimentConfig,
    theta_list,
    duration: float,
    base_seed: int,
    repeats: int = 1,
    stream: int = 0,
) -> list[CountRecord]:
    """Acquire ``repeats`` consecutive records at each angle, in order.

    Records are taken back to back in lab time (angle-major), which is what
    a pump drift acts on.
    """
    thetas = [float(t) for t in theta_list]
    if not thetas:
        raise ValueError("theta_list is empty")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    out = []
    for i, theta in enumerate(thetas):
        for r in range(repeats):
            idx = i * repeats + r
            out.append(simulate_run(cfg, theta, duration, derive_seed(base_seed, idx, stream), t_start=idx * duration))
    return out
