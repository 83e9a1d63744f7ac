"""Communication links: sawtooth watermarking and a replaying man-in-the-middle.

Senders add a sawtooth watermark Delta(t) = c * (t mod 2*T_bar) to every
component of the transmitted measurement; receivers subtract the same value
(the watermark is pre-shared and both ends run on the simulation clock).
Under a replay of period T the receiver is left with the residue

    delta(t) = Delta(t - n T) - Delta(t),

a square wave of period 2*T_bar that never vanishes for 0 < T <= T_bar.
"""

import bisect
from dataclasses import dataclass, field

import numpy as np


@dataclass
class WatermarkConfig:
    """Per-link sawtooth slope and the assumed attack-period bound."""

    slope: float          # c, signal-units per second (0 disables)
    period_bound: float   # T_bar (s); the sawtooth period is 2*T_bar

    def __post_init__(self):
        if self.slope < 0:
            raise ValueError("watermark slope must be >= 0")
        if self.period_bound <= 0:
            raise ValueError("period bound must be > 0")


@dataclass
class ReplayAttackConfig:
    """Replay attack on one directed link src -> dst."""

    src: int
    dst: int
    t_record: float   # T0: attacker starts buffering
    t_attack: float   # Ta: attacker starts replaying
    period: float     # T: length of the replayed window

    def __post_init__(self):
        if not self.t_record < self.t_attack:
            raise ValueError("t_record must precede t_attack")
        if not 0 < self.period <= self.t_attack - self.t_record:
            raise ValueError("period must satisfy 0 < T <= t_attack - t_record")


@dataclass
class LinkFrame:
    """One transmitted measurement frame."""

    t: float
    payload: np.ndarray

    def __post_init__(self):
        self.payload = np.asarray(self.payload, dtype=float)
        if not np.all(np.isfinite(self.payload)):
            raise ValueError("frame payload must be finite")


def watermark_value(t, wm: WatermarkConfig):
    """Sawtooth watermark at time t, equal on all three components."""
    if t < 0:
        raise ValueError("watermark is defined for t >= 0")
    return np.full(3, wm.slope * (t % (2.0 * wm.period_bound)))


def encode(y, t, wm: WatermarkConfig) -> LinkFrame:
    """Watermarked frame y + Delta(t)."""
    return LinkFrame(t=t, payload=np.asarray(y, dtype=float) + watermark_value(t, wm))


def decode(frame: LinkFrame, t, wm: WatermarkConfig):
    """Subtract the known watermark at the receive time t.

    Under no attack this recovers the sender's measurement exactly; under a
    replay the stale frame leaves yhat = y(t - nT) + delta(t).
    """
    return frame.payload - watermark_value(t, wm)


def replay_index(t, t_attack, period) -> int:
    """Replay count n at time t >= t_attack.

    n = floor((t - Ta)/T) + 1, so the replayed window [Ta - T, Ta) is always
    fully inside the recorded buffer (the ceiling form would reach Ta itself
    at the window boundaries).
    """
    return int((t - t_attack) // period) + 1


def delta_offset(t, n, period, wm: WatermarkConfig):
    """Watermark residue delta(t) = Delta(t - n T) - Delta(t) left by a replay."""
    if t < n * period:
        raise ValueError("delta_offset requires t >= n*T")
    return watermark_value(t - n * period, wm) - watermark_value(t, wm)


def replay_delta(t, atk: ReplayAttackConfig, wm: WatermarkConfig):
    """delta(t) for a configured attack; zero before the attack starts."""
    if t < atk.t_attack:
        return np.zeros(3)
    return delta_offset(t, replay_index(t, atk.t_attack, atk.period), atk.period, wm)


def delta_breakpoints(atk: ReplayAttackConfig, wm: WatermarkConfig, t_end):
    """Sorted times in [t_attack, t_end] where replay_delta can change value.

    Candidates: replay-window boundaries Ta + kT and the sawtooth wraps of
    both Delta(t) and Delta(t - nT).
    """
    Ta, T, P = atk.t_attack, atk.period, 2.0 * wm.period_bound
    pts = {Ta, t_end}
    k = 0
    while Ta + k * T < t_end:
        pts.add(Ta + k * T)
        k += 1
    m = int(Ta // P)
    while m * P < t_end:
        if m * P > Ta:
            pts.add(m * P)
        m += 1
    # wraps of the shifted sawtooth: t = nT (mod P), per replay window
    k = 1
    while Ta + (k - 1) * T < t_end:
        lo, hi = Ta + (k - 1) * T, min(Ta + k * T, t_end)
        shift = (k * T) % P
        m = int((lo - shift) // P)
        while shift + m * P <= hi:
            if lo < shift + m * P < hi:
                pts.add(shift + m * P)
            m += 1
        k += 1
    return sorted(p for p in pts if Ta <= p <= t_end)


class ReplayAttacker:
    """Man-in-the-middle that records watermarked frames and replays them.

    The attacker sits on the wire: it stores the frames as transmitted
    (watermark included) from t_record, passes traffic through untouched
    before t_attack, and afterwards substitutes the frame recorded at
    t - n T, returned with its original timestamp.
    """

    def __init__(self, config: ReplayAttackConfig):
        self.config = config
        self._times = []
        self._frames = []

    def transform(self, frame: LinkFrame, t) -> LinkFrame:
        cfg = self.config
        if cfg.t_record <= t < cfg.t_attack:
            self._times.append(t)
            self._frames.append(frame)
        if t < cfg.t_attack:
            return frame
        target = t - replay_index(t, cfg.t_attack, cfg.period) * cfg.period
        i = bisect.bisect_left(self._times, target - 1e-12)
        if i >= len(self._times) or abs(self._times[i] - target) > 1e-9:
            raise RuntimeError(
                f"replay target t={target} not in recorded buffer "
                f"[{cfg.t_record}, {cfg.t_attack})")
        return self._frames[i]
