"""Seeded Monte-Carlo detection timestamps for a photon-pair source.

Pairs are born as a Poisson process. The signal-2 member is stamped at its
birth time ``t``. The signal-1 member arrives at ``t + fiber_delay + delta``,
with ``delta`` drawn from a two-sided exponential (Laplace) distribution of
scale ``tau_c / 2``. Each member survives detection independently with the
composite efficiency of its arm, and each channel receives independent
Poisson background counts.

Timestamps are integer picoseconds. Randomness is drawn per fixed time block
from a counter-based Philox generator keyed by ``(seed, block index)``. A
block's events therefore never depend on how many other blocks exist or on
the order in which blocks are produced, so threaded and serial runs agree
bit for bit.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .model import ExperimentConfig

__all__ = [
    "PS",
    "BLOCK_SECONDS",
    "TagStream",
    "TemporalParams",
    "temporal_params_from_config",
    "generate",
    "apply_gate",
]

PS = 1e-12
BLOCK_SECONDS = 1.0


@dataclass(frozen=True, eq=False)
class TagStream:
    """Sorted detection times of one channel, in integer picoseconds."""

    channel: int
    timestamps: np.ndarray
    duration: float

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        if ts.ndim != 1:
            raise ValueError("timestamps must be 1D")
        if ts.size and not np.issubdtype(ts.dtype, np.integer):
            raise ValueError("timestamps must be integer picoseconds")
        ts = ts.astype(np.int64, copy=False)
        object.__setattr__(self, "timestamps", ts)
        if not self.duration > 0:
            raise ValueError("duration > 0 violated")
        if ts.size:
            if np.any(np.diff(ts) < 0):
                raise ValueError("timestamps must be sorted")
            if ts[0] < 0:
                raise ValueError("timestamps must be non-negative")
            if ts[-1] >= self.duration_ps:
                raise ValueError("timestamps must lie before the end of the run")

    @property
    def duration_ps(self) -> int:
        return int(round(self.duration / PS))

    @property
    def rate(self) -> float:
        return self.timestamps.size / self.duration

    def __len__(self):
        return self.timestamps.size

    def __eq__(self, other):
        if not isinstance(other, TagStream):
            return NotImplemented
        return (self.channel == other.channel and self.duration == other.duration
                and np.array_equal(self.timestamps, other.timestamps))


@dataclass(frozen=True)
class TemporalParams:
    pair_rate: float
    tau_c: float
    fiber_delay: float
    eta1: float
    eta2: float
    bg_rate1: float = 0.0
    bg_rate2: float = 0.0
    gate_width: float = math.inf
    gate_electronic_delay: float = 0.0
    gated: bool = False
    seed: int = 0

    def __post_init__(self):
        for name in ("pair_rate", "bg_rate1", "bg_rate2"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} >= 0 violated")
        for name in ("eta1", "eta2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"0 <= {name} <= 1 violated")
        if not self.tau_c > 0:
            raise ValueError("tau_c > 0 violated")
        if not self.gate_width > 0:
            raise ValueError("gate_width > 0 violated")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def gating_active(self) -> bool:
        # an infinitely wide gate is the same as no gate at all
        return self.gated and math.isfinite(self.gate_width)


def temporal_params_from_config(cfg: ExperimentConfig, seed: int = 0, **overrides) -> TemporalParams:
    values = dict(
        pair_rate=cfg.pair_rate,
        tau_c=cfg.tau_c,
        fiber_delay=cfg.fiber_delay,
        eta1=cfg.eta1,
        eta2=cfg.eta2,
        bg_rate1=cfg.bg_rate1,
        bg_rate2=cfg.bg_rate2,
        gate_width=cfg.gate_width,
        gate_electronic_delay=cfg.gate_electronic_delay,
        gated=cfg.gated,
        seed=seed,
    )
    values.update(overrides)
    return TemporalParams(**values)


def _block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, block])))


def _uniform_times(rng, rate, start, length):
    n = rng.poisson(rate * length)
    return start + length * rng.random(n)


def _block_events(params: TemporalParams, block: int, start: float, length: float):
    """Raw (unsorted, float seconds) detections born inside one block.

    Draw order is fixed: pair births, delays, detection coins, backgrounds.
    """
    rng = _block_generator(params.seed, block)
    births = _uniform_times(rng, params.pair_rate, start, length)
    delays = rng.laplace(0.0, 0.5 * params.tau_c, births.size)
    keep1 = rng.random(births.size) < params.eta1
    keep2 = rng.random(births.size) < params.eta2
    bg1 = _uniform_times(rng, params.bg_rate1, start, length)
    bg2 = _uniform_times(rng, params.bg_rate2, start, length)
    t1 = np.concatenate([births[keep1] + params.fiber_delay + delays[keep1], bg1])
    t2 = np.concatenate([births[keep2], bg2])
    return t1, t2


def _to_stream(channel: int, times: np.ndarray, duration: float) -> TagStream:
    ps = np.floor(times / PS).astype(np.int64)
    end = int(round(duration / PS))
    ps = ps[(ps >= 0) & (ps < end)]
    ps.sort(kind="stable")
    return TagStream(channel, ps, duration)


def apply_gate(s1: TagStream, s2: TagStream, gate_width: float, gate_delay: float) -> TagStream:
    """Keep detector-1 tags that fall in ``[t2 + delay, t2 + delay + width)``
    for some detector-2 tag ``t2``."""
    t1 = s1.timestamps
    if not math.isfinite(gate_width):
        return s1
    t2 = s2.timestamps
    if t2.size == 0:
        return TagStream(s1.channel, t1[:0], s1.duration)
    delay = int(round(gate_delay / PS))
    width = int(round(gate_width / PS))
    # the most recently opened gate is the only one that can still be open
    idx = np.searchsorted(t2, t1 - delay, side="right") - 1
    opened = t2[np.clip(idx, 0, None)] + delay
    keep = (idx >= 0) & (t1 - opened < width)
    return TagStream(s1.channel, t1[keep], s1.duration)


def generate(params: TemporalParams, duration: float, workers: int = 1):
    """Simulate ``duration`` seconds of detections.

    Returns ``(stream1, stream2)`` for the slit arm (channel 1) and the
    scanned arm (channel 2). Events pushed past ``duration`` by the fiber
    delay are dropped.
    """
    if not duration > 0:
        raise ValueError("duration > 0 violated")
    block = BLOCK_SECONDS
    n_blocks = max(1, math.ceil(duration / block - 1e-12))
    starts = [i * block for i in range(n_blocks)]
    lengths = [min(block, duration - s) for s in starts]

    def task(i):
        return _block_events(params, i, starts[i], lengths[i])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(task, range(n_blocks)))
    else:
        parts = [task(i) for i in range(n_blocks)]
    t1 = np.concatenate([p[0] for p in parts])
    t2 = np.concatenate([p[1] for p in parts])
    s1 = _to_stream(1, t1, duration)
    s2 = _to_stream(2, t2, duration)
    if params.gating_active:
        s1 = apply_gate(s1, s2, params.gate_width, params.gate_electronic_delay)
    return s1, s2
