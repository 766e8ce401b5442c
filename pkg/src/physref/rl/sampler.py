"""Failure-driven adaptive sampling over 1-second motion bins.

Each clip is segmented into fixed bins (a sub-second tail forms its own
bin). Sampling probability grows with a bin's accumulated failure count:
p_i proportional to fail_i + alpha, then one clamp to
[min_coeff/N, max_coeff/N] followed by one renormalization. The single
clamp+renormalize pass is deliberate: renormalizing can push probabilities
slightly past the clamp bounds again, and iterating to a fixed point is not
part of the contract (a provable post-renormalization floor is
min_coeff / (N * (1 + min_coeff)); see the property tests).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

BIN_DURATION = 1.0     # s
ALPHA = 0.001          # blending constant added to every fail count
MIN_COEFF_PMG = 0.75   # clamp floor, x uniform probability
MIN_COEFF_GMT = 0.25   # looser floor for the proprioceptive stage
MAX_COEFF = 100.0


@dataclass(frozen=True)
class Bin:
    clip_id: int
    start: float   # s within the clip
    end: float


@dataclass(frozen=True)
class BinDraw:
    bin_index: int
    clip_id: int
    start_time: float


@dataclass(frozen=True)
class SamplerState:
    bins: tuple[Bin, ...]
    fail_counts: np.ndarray      # (N,)
    alpha: float
    min_coeff: float
    max_coeff: float
    probs: np.ndarray            # (N,), sums to 1

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))


def segment_bins(duration: float, clip_id: int,
                 bin_duration: float = BIN_DURATION) -> list[Bin]:
    """Fixed-length bins over [0, duration); a sub-length tail is its own bin."""
    if duration <= 0:
        raise ValueError("clip duration must be > 0")
    edges = [0.0]
    while edges[-1] + bin_duration <= duration + 1e-9:
        edges.append(edges[-1] + bin_duration)
    if duration - edges[-1] > 1e-9:
        edges.append(duration)
    return [Bin(clip_id=clip_id, start=a, end=b)
            for a, b in zip(edges[:-1], edges[1:])]


def compute_probs(fail_counts: np.ndarray, alpha: float, min_coeff: float,
                  max_coeff: float) -> np.ndarray:
    raw = np.asarray(fail_counts, dtype=np.float64) + alpha
    p = raw / raw.sum()
    n = p.shape[0]
    p = np.clip(p, min_coeff / n, max_coeff / n)
    return p / p.sum()


def build_bins(durations, alpha: float = ALPHA, min_coeff: float = MIN_COEFF_PMG,
               max_coeff: float = MAX_COEFF,
               bin_duration: float = BIN_DURATION) -> SamplerState:
    """Sampler over the bins of all clips; ``durations`` is one length in
    seconds per clip id."""
    bins: list[Bin] = []
    for clip_id, dur in enumerate(durations):
        bins.extend(segment_bins(float(dur), clip_id, bin_duration))
    if not bins:
        raise ValueError("no bins (empty dataset)")
    fails = np.zeros(len(bins))
    return SamplerState(
        bins=tuple(bins), fail_counts=fails, alpha=alpha,
        min_coeff=min_coeff, max_coeff=max_coeff,
        probs=compute_probs(fails, alpha, min_coeff, max_coeff),
    )


def update_sampler(state: SamplerState, results) -> SamplerState:
    """Fold in (bin_index, failed) episode results and refresh probabilities."""
    fails = state.fail_counts.copy()
    for bin_index, failed in results:
        if not 0 <= bin_index < state.n_bins:
            raise ValueError(f"bin index {bin_index} out of range")
        if failed:
            fails[bin_index] += 1.0
    return replace(
        state, fail_counts=fails,
        probs=compute_probs(fails, state.alpha, state.min_coeff, state.max_coeff),
    )


def sample_start(state: SamplerState, rng: np.random.Generator) -> BinDraw:
    """Draw a bin; episodes reset to the reference frame at the bin start."""
    i = int(rng.choice(state.n_bins, p=state.probs))
    b = state.bins[i]
    return BinDraw(bin_index=i, clip_id=b.clip_id, start_time=b.start)
