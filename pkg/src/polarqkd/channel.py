"""Symmetric binary-input channel models used by the reconciliation stack.

Two channel families are supported:

* ``Bsc(p)`` -- binary symmetric channel with crossover probability ``p``
  (discrete-variable QKD after sifting).
* ``BiAwgn(snr)`` -- binary-input additive white Gaussian noise channel with
  ``snr = Es / sigma^2`` (continuous-variable QKD after binary encoding).

Conventions fixed here and relied on everywhere else:

* BIAWGN uses unit-energy antipodal mapping bit ``b -> 1 - 2b`` and noise
  variance ``sigma^2 = 1 / snr``.
* LLRs are in natural-log units, positive values favouring bit 0.
* All LLR magnitudes are clamped at :data:`LLR_CLAMP`; beyond that the bit
  decision is numerically certain and infinities (e.g. ``p = 0``) are avoided.
* Randomness comes from seeded PCG64 generators so every simulation is
  replayable from its recorded seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

# Saturation magnitude for all LLRs, natural-log units.
LLR_CLAMP = 30.0


@dataclass(frozen=True)
class Bsc:
    """Binary symmetric channel with crossover probability ``p``.

    ``p = 0.5`` is accepted as a degenerate zero-capacity boundary case
    (useful for exercising code construction on a useless channel).
    """

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 0.5:
            raise ValueError(f"BSC crossover probability must be in [0, 0.5], got {self.p}")


@dataclass(frozen=True)
class BiAwgn:
    """Binary-input AWGN channel with signal-to-noise ratio ``snr = Es/sigma^2``."""

    snr: float

    def __post_init__(self):
        if not self.snr > 0.0:
            raise ValueError(f"BIAWGN snr must be positive, got {self.snr}")

    @property
    def sigma2(self) -> float:
        """Noise variance for unit-energy symbols."""
        return 1.0 / self.snr


ChannelModel = Union[Bsc, BiAwgn]


def make_rng(seed, stream=None) -> np.random.Generator:
    """Seeded PCG64 generator; ``stream`` derives an independent substream.

    PCG64 streams are stable across platforms for a fixed numpy major line,
    which is what makes recorded seeds sufficient for exact replay.
    """
    entropy = seed if stream is None else (seed, stream)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def binary_entropy(p: float) -> float:
    """Binary entropy h(p) in bits, with h(0) = h(1) = 0 by convention."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"binary_entropy argument must be in [0, 1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return float(-p * np.log2(p) - (1.0 - p) * np.log2(1.0 - p))


def gaussian_mutual_information(snr: float) -> float:
    """Mutual information 0.5*log2(1 + snr) of the Gaussian-modulation channel."""
    if not snr > 0.0:
        raise ValueError(f"snr must be positive, got {snr}")
    return float(0.5 * np.log2(1.0 + snr))


def _biawgn_capacity(snr: float, points: int = 1 << 14) -> float:
    # 1 - E_y[log2(1 + exp(-L))], y ~ N(+1, sigma^2), L = 2*y*snr.
    # Trapezoid over +-10 sigma keeps the truncation error far below 1e-6.
    sigma = np.sqrt(1.0 / snr)
    y = np.linspace(1.0 - 10.0 * sigma, 1.0 + 10.0 * sigma, points)
    pdf = np.exp(-((y - 1.0) ** 2) / (2.0 * sigma * sigma)) / (sigma * np.sqrt(2.0 * np.pi))
    llr = 2.0 * y * snr
    loss = np.logaddexp(0.0, -llr) / np.log(2.0)
    return float(1.0 - np.trapezoid(loss * pdf, y))


def capacity(ch: ChannelModel) -> float:
    """Channel capacity in bits per use.

    BSC: ``1 - h(p)`` in closed form.  BIAWGN: binary-input capacity by
    numerical integration over the Gaussian output density.
    """
    if isinstance(ch, Bsc):
        return 1.0 - binary_entropy(ch.p)
    if isinstance(ch, BiAwgn):
        return min(1.0, max(0.0, _biawgn_capacity(ch.snr)))
    raise TypeError(f"unsupported channel model: {ch!r}")


def transmit(ch: ChannelModel, bits: np.ndarray, seed, stream=None) -> np.ndarray:
    """Send ``bits`` through the channel; deterministic given ``seed``.

    Returns received bits (uint8) for the BSC and real-valued samples
    (float64) for the BIAWGN.
    """
    bits = np.asarray(bits)
    if bits.size == 0:
        raise ValueError("transmit requires a nonempty bit vector")
    rng = make_rng(seed, stream)
    if isinstance(ch, Bsc):
        flips = rng.random(bits.size) < ch.p
        return (bits.astype(np.uint8) ^ flips.astype(np.uint8))
    if isinstance(ch, BiAwgn):
        symbols = 1.0 - 2.0 * bits.astype(np.float64)
        noise = rng.normal(0.0, np.sqrt(ch.sigma2), bits.size)
        return symbols + noise
    raise TypeError(f"unsupported channel model: {ch!r}")


def channel_llr(ch: ChannelModel, obs: np.ndarray) -> np.ndarray:
    """Per-symbol LLR ln(P(obs|0)/P(obs|1)), clamped at +-LLR_CLAMP.

    BSC: ``(1 - 2*obs) * ln((1-p)/p)``.  BIAWGN: ``2 * obs * snr``.
    """
    obs = np.atleast_1d(np.asarray(obs))
    if isinstance(ch, Bsc):
        if ch.p == 0.0:
            magnitude = LLR_CLAMP
        else:
            magnitude = min(LLR_CLAMP, float(np.log((1.0 - ch.p) / ch.p))) if ch.p < 0.5 else 0.0
        return (1.0 - 2.0 * obs.astype(np.float64)) * magnitude
    if isinstance(ch, BiAwgn):
        return np.clip(2.0 * obs.astype(np.float64) * ch.snr, -LLR_CLAMP, LLR_CLAMP)
    raise TypeError(f"unsupported channel model: {ch!r}")


def channel_tag(ch: ChannelModel) -> tuple[int, float]:
    """(family tag, parameter) pair used by the code-table file format."""
    if isinstance(ch, Bsc):
        return 0, ch.p
    if isinstance(ch, BiAwgn):
        return 1, ch.snr
    raise TypeError(f"unsupported channel model: {ch!r}")


def channel_from_tag(tag: int, param: float) -> ChannelModel:
    """Inverse of :func:`channel_tag`."""
    if tag == 0:
        return Bsc(param)
    if tag == 1:
        return BiAwgn(param)
    raise ValueError(f"unknown channel tag {tag}")
