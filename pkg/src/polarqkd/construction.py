"""Polar code construction by quantized density evolution.

The per-bit error probabilities of the synthetic channels are computed by
pushing the base channel's LLR density through the recursive check-node (f)
and variable-node (g) transformations, one level per code stage, under the
all-zero-input convention valid for symmetric channels.  Frozen bits are then
chosen greedily so that the union bound on the frame error rate stays below a
target.

Quantization scheme
-------------------
Densities live on a uniform LLR grid of ``bins + 1`` slots over
``[-max_llr, +max_llr]``: the two outermost slots are explicit saturation
bins with +/-infinity semantics (their mass is treated as a numerically
certain bit decision), the ``bins - 1`` interior slots are lattice points
with spacing ``2*max_llr/bins`` and an exact zero bin in the middle.  The
variable-node transform is an exact lattice convolution; the check-node
transform scatters mass through a precomputed pairwise table with linear
splitting between neighbouring bins.

Subtree pruning
---------------
Exhaustive evolution touches ~2^(n+1) densities, which is hopeless at
n = 24.  Polarization makes almost all subtrees decided long before the
leaves, so the evolution prunes:

* good side -- when ``2^d * Z <= prune_z_eps`` for a node with ``d`` levels
  to go (``Z`` the Bhattacharyya parameter of the quantized density), every
  descendant's ``Z`` is bounded by the scalar recursion ``Z -> 2Z - Z^2`` /
  ``Z -> Z^2``, and the leaves receive the certified bound ``Z_leaf / 2`` as
  their error probability (an upper bound, so the FER union bound stays
  valid);
* bad side -- mutual information is conserved by the transform pair, so when
  ``2^d * I <= prune_i_eps`` no descendant can carry more than
  ``prune_i_eps`` bits and the leaves are written off at ``pe = 0.5``.

Both thresholds have several orders of magnitude of margin against
quantization noise; with the defaults nothing is pruned at n <= 5, so the
small-block oracle checks exercise the unpruned path.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numba
import numpy as np
from scipy.signal import fftconvolve

from .channel import (
    BiAwgn,
    Bsc,
    ChannelModel,
    binary_entropy,
    capacity,
    channel_from_tag,
    channel_tag,
    gaussian_mutual_information,
)

TOOL_VERSION = "polarqkd-0.1.0"

CODE_TABLE_MAGIC = b"PQCT"
CODE_TABLE_VERSION = 1


@dataclass(frozen=True)
class DeGrid:
    """Density-evolution grid descriptor: bin count and LLR half-range."""

    bins: int = 2048
    max_llr: float = 30.0

    def __post_init__(self):
        if self.bins < 256:
            raise ValueError(f"DE grid needs at least 256 bins, got {self.bins}")
        if self.bins % 2 != 0:
            raise ValueError(f"DE grid bin count must be even, got {self.bins}")
        if not self.max_llr > 0:
            raise ValueError(f"DE grid max_llr must be positive, got {self.max_llr}")


@dataclass(frozen=True)
class ConstructionResult:
    """Per-synthetic-channel error probabilities for one (channel, n) pair."""

    n: int
    channel: ChannelModel
    pe: np.ndarray
    quantization: DeGrid


@dataclass(frozen=True)
class PolarCode:
    """Block-size / frozen-set contract between construction and decoding."""

    n: int
    frozen_mask: np.ndarray  # uint8, 1 = frozen, length 2^n
    channel: ChannelModel
    target_fer: float
    quantization: DeGrid
    tool_version: str = TOOL_VERSION

    def __post_init__(self):
        if self.frozen_mask.shape != (1 << self.n,):
            raise ValueError("frozen mask length must be exactly 2^n")

    @property
    def block_size(self) -> int:
        return 1 << self.n

    @property
    def frozen_count(self) -> int:
        return int(np.count_nonzero(self.frozen_mask))

    @property
    def rate(self) -> float:
        return 1.0 - self.frozen_count / self.block_size

    def frozen_indices(self) -> np.ndarray:
        return np.nonzero(self.frozen_mask)[0]

    def info_indices(self) -> np.ndarray:
        return np.nonzero(self.frozen_mask == 0)[0]


# ---------------------------------------------------------------------------
# Grid machinery

def _boxplus_magnitude(a, b):
    # Exact |f| for positive magnitudes: min(a,b) + log1p(e^-(a+b)) - log1p(e^-|a-b|).
    m = np.minimum(a, b)
    return m + np.log1p(np.exp(-(a + b))) - np.log1p(np.exp(-np.abs(a - b)))


@numba.njit(cache=True)
def _f_scatter(nz, mv, idx2d, whi2d, out):
    # Self-combination check-node scatter over the nonzero support, using
    # operand symmetry (off-diagonal pairs counted twice).  Serial on purpose:
    # float accumulation order must stay deterministic.
    k = nz.size
    for a in range(k):
        ia = nz[a]
        wa = mv[a]
        t = idx2d[ia, ia]
        h = whi2d[ia, ia]
        w = wa * wa
        out[t] += w * (1.0 - h)
        out[t + 1] += w * h
        for b in range(a + 1, k):
            ib = nz[b]
            w = 2.0 * wa * mv[b]
            t = idx2d[ia, ib]
            h = whi2d[ia, ib]
            out[t] += w * (1.0 - h)
            out[t + 1] += w * h


class _GridOps:
    """Precomputed transform tables for one DeGrid (cached per process)."""

    def __init__(self, grid: DeGrid):
        self.grid = grid
        self.step = 2.0 * grid.max_llr / grid.bins
        self.center = grid.bins // 2  # full-vector index of the zero bin
        self.size = grid.bins + 1
        self.ni = grid.bins - 1  # interior slot count
        # interior values, full-vector index k in [1, bins-1]
        self.values = (np.arange(1, grid.bins) - self.center) * self.step
        vmin = self.values[0]

        a = self.values[:, None]
        b = self.values[None, :]
        fval = np.sign(a) * np.sign(b) * _boxplus_magnitude(np.abs(a), np.abs(b))
        pos = (fval - vmin) / self.step
        idx = np.floor(pos).astype(np.int32)
        np.clip(idx, 0, self.ni - 2, out=idx)
        self.f_idx = idx
        self.f_whi = np.clip(pos - idx, 0.0, 1.0)

        # moment weights for Z (Bhattacharyya) and mutual information
        self.z_weights = np.exp(-0.5 * self.values)
        self.i_loss = np.logaddexp(0.0, -self.values) / np.log(2.0)
        # mass landing in the -inf bin may have true LLR as low as -2*max_llr
        # after one lattice overflow; bound its Z contribution accordingly
        self.z_lo_bound = float(np.exp(grid.max_llr))

    # -- density helpers ---------------------------------------------------

    def pe(self, m: np.ndarray) -> float:
        return float(m[: self.center].sum() + 0.5 * m[self.center])

    def z_bound(self, m: np.ndarray) -> float:
        z = float(np.dot(m[1:-1], self.z_weights)) + float(m[0]) * self.z_lo_bound
        return z

    def mutual_info_bound(self, m: np.ndarray) -> float:
        # Optimistic on the saturation bins, hence an upper bound.
        loss = float(np.dot(m[1:-1], self.i_loss))
        return max(0.0, 1.0 - loss)

    # -- transforms (density combined with itself) -------------------------

    def f_self(self, m: np.ndarray) -> np.ndarray:
        lo, hi = m[0], m[-1]
        mi = m[1:-1]
        out = np.zeros_like(m)
        nz = np.nonzero(mi)[0]
        if nz.size:
            _f_scatter(nz, mi[nz], self.f_idx, self.f_whi, out[1:-1])
        if hi:
            out[1:-1] += 2.0 * hi * mi  # f(+inf, x) = x
            out[-1] += hi * hi
        if lo:
            out[1:-1] += 2.0 * lo * mi[::-1]  # f(-inf, x) = -x
            out[-1] += lo * lo
            out[0] += 2.0 * hi * lo
        return out

    def g_self(self, m: np.ndarray) -> np.ndarray:
        lo, hi = m[0], m[-1]
        mi = m[1:-1]
        out = np.zeros_like(m)
        nz = np.nonzero(mi)[0]
        if nz.size:
            w0, w1 = int(nz[0]), int(nz[-1]) + 1
            win = mi[w0:w1]
            if win.size > 64:
                conv = fftconvolve(win, win)
                np.clip(conv, 0.0, None, out=conv)
            else:
                conv = np.convolve(win, win)
            # full-vector lattice index of conv[t] is (w0+1)*2 + t - center
            base = 2 * (w0 + 1) - self.center
            t = np.arange(conv.size) + base
            inside = (t >= 1) & (t <= self.grid.bins - 1)
            np.add.at(out, t[inside], conv[inside])
            out[0] += conv[t < 1].sum()
            out[-1] += conv[t > self.grid.bins - 1].sum()
        tot_i = mi.sum()
        if hi:
            out[-1] += hi * hi + 2.0 * hi * tot_i  # g(+inf, x) = +inf
        if lo:
            out[0] += lo * lo + 2.0 * lo * tot_i
            out[self.center] += 2.0 * hi * lo  # g(+inf, -inf) = 0
        return out


_GRID_CACHE: dict = {}


def _grid_ops(grid: DeGrid) -> _GridOps:
    key = (grid.bins, grid.max_llr)
    if key not in _GRID_CACHE:
        _GRID_CACHE[key] = _GridOps(grid)
    return _GRID_CACHE[key]


# ---------------------------------------------------------------------------
# Base channel densities

def _base_density(ch: ChannelModel, ops: _GridOps) -> np.ndarray:
    grid = ops.grid
    m = np.zeros(ops.size)
    if isinstance(ch, Bsc):
        if ch.p == 0.0:
            m[-1] = 1.0
            return m
        c = np.log((1.0 - ch.p) / ch.p) if ch.p < 0.5 else 0.0
        for mag, mass in ((c, 1.0 - ch.p), (-c, ch.p)):
            if mag >= grid.max_llr:
                m[-1] += mass
            elif mag <= -grid.max_llr:
                m[0] += mass
            else:
                pos = (mag - ops.values[0]) / ops.step
                k = int(np.floor(pos))
                frac = pos - k
                m[1 + k] += mass * (1.0 - frac)
                m[1 + k + 1] += mass * frac
        return m
    if isinstance(ch, BiAwgn):
        # L = 2*y*snr, y ~ N(+1, 1/snr)  =>  L ~ N(2*snr, 4*snr)
        from scipy.stats import norm

        mu, sd = 2.0 * ch.snr, 2.0 * np.sqrt(ch.snr)
        # slot 0 = (-inf, vmin - step/2], interior slots, slot -1 = (vmax + step/2, inf)
        lo_edge = ops.values[0] - 0.5 * ops.step
        cdf = norm.cdf(np.concatenate(([lo_edge], ops.values + 0.5 * ops.step)), mu, sd)
        m[0] = cdf[0]
        m[1:-1] = np.diff(cdf)
        m[-1] = 1.0 - cdf[-1]
        return m
    raise TypeError(f"unsupported channel model: {ch!r}")


# ---------------------------------------------------------------------------
# Density evolution

def _fill_pruned_good(pe_out: np.ndarray, start: int, depth_left: int, z: float):
    # Scalar Bhattacharyya recursion down the pruned subtree; children are
    # ordered [check (worse), variable (better)] to match leaf indexing.
    zs = np.array([min(1.0, z)])
    for _ in range(depth_left):
        worse = np.minimum(1.0, 2.0 * zs - zs * zs)
        better = zs * zs
        zs = np.stack([worse, better], axis=1).ravel()
    pe_out[start : start + zs.size] = np.minimum(0.5, 0.5 * zs)


def density_evolution(
    ch: ChannelModel,
    n: int,
    quant: DeGrid = DeGrid(),
    prune_z_eps: float = 1e-9,
    prune_i_eps: float = 1e-3,
    mass_floor: float = 1e-30,
) -> ConstructionResult:
    """Per-bit error probabilities of all ``2^n`` synthetic channels.

    Parameters
    ----------
    ch : ChannelModel
        Base channel.
    n : int
        log2 of the block size, ``1 <= n <= 27``.
    quant : DeGrid
        Quantization descriptor.
    prune_z_eps, prune_i_eps : float
        Certified subtree-pruning thresholds (see module docstring).  Set to
        0 to disable pruning entirely.
    mass_floor : float
        Interior bins carrying less mass than this are emptied into the
        zero-LLR bin before each transform.  Moving mass towards zero LLR
        only degrades the channel, so the FER union bound stays valid; the
        point is to keep the check-node scatter's support small.

    Returns
    -------
    ConstructionResult
        ``pe[i]`` is the hard-decision error probability of synthetic
        channel ``i`` under genie-aided successive decoding, in decoding
        order.
    """
    if not 1 <= n <= 27:
        raise ValueError(f"n must be in [1, 27], got {n}")
    ops = _grid_ops(quant)
    base = _base_density(ch, ops)
    if np.count_nonzero(base[1:-1]) == 1 and base[0] == 0.0 and base[-1] == 0.0:
        raise ValueError(
            "DE grid too coarse: the base channel density collapses into a single bin"
        )

    size = 1 << n
    pe_out = np.empty(size)

    # Iterative DFS; stack entries are (density, depth, leaf offset).
    stack = [(base, 0, 0)]
    while stack:
        m, depth, offset = stack.pop()
        d = n - depth
        if d == 0:
            pe_out[offset] = min(0.5, ops.pe(m))
            continue
        if prune_z_eps > 0.0:
            z = ops.z_bound(m)
            if np.ldexp(z, d) <= prune_z_eps:
                _fill_pruned_good(pe_out, offset, d, z)
                continue
        if prune_i_eps > 0.0:
            mi_bound = ops.mutual_info_bound(m)
            if np.ldexp(mi_bound, d) <= prune_i_eps:
                pe_out[offset : offset + (1 << d)] = 0.5
                continue
        if mass_floor > 0.0:
            mi = m[1:-1]
            tiny = (mi > 0.0) & (mi < mass_floor)
            tiny[ops.center - 1] = False  # zero-LLR bin is the recipient
            if tiny.any():
                m = m.copy()
                mi = m[1:-1]
                m[ops.center] += mi[tiny].sum()
                mi[tiny] = 0.0
        half = 1 << (d - 1)
        # push g-child first so the f-child (lower leaf indices) pops first
        stack.append((ops.g_self(m), depth + 1, offset + half))
        stack.append((ops.f_self(m), depth + 1, offset))

    return ConstructionResult(n=n, channel=ch, pe=pe_out, quantization=quant)


# ---------------------------------------------------------------------------
# Frozen-set selection and derived figures

def select_frozen(res: ConstructionResult, target_fer: float) -> PolarCode:
    """Greedy maximum-rate frozen set under the FER union bound.

    Information bits are added in ascending order of ``pe`` (ties broken by
    ascending index) while the running sum stays within ``target_fer``; all
    remaining positions are frozen.
    """
    if not 0.0 < target_fer < 1.0:
        raise ValueError(f"target FER must be in (0, 1), got {target_fer}")
    order = np.lexsort((np.arange(res.pe.size), res.pe))
    budget = np.cumsum(res.pe[order])
    k = int(np.searchsorted(budget, target_fer, side="right"))
    mask = np.ones(res.pe.size, dtype=np.uint8)
    mask[order[:k]] = 0
    return PolarCode(
        n=res.n,
        frozen_mask=mask,
        channel=res.channel,
        target_fer=target_fer,
        quantization=res.quantization,
    )


def efficiency(code: PolarCode, ch: ChannelModel) -> float:
    """Reconciliation efficiency beta of a code on its design channel.

    BSC: ``R / (1 - h(p))``.  BIAWGN: ``R / C_bi(snr)`` with the
    binary-input channel capacity as denominator; the Gaussian-modulation
    variant ``R / (0.5 log2(1+snr))`` is available as
    :func:`efficiency_gaussian_mi`.
    """
    if not isinstance(ch, type(code.channel)):
        raise ValueError("efficiency requires a channel of the code's design family")
    if isinstance(ch, Bsc):
        denom = 1.0 - binary_entropy(ch.p)
    elif isinstance(ch, BiAwgn):
        denom = capacity(ch)
    else:
        raise TypeError(f"unsupported channel model: {ch!r}")
    if denom <= 0.0:
        raise ValueError("efficiency is undefined on a zero-capacity channel")
    return code.rate / denom


def efficiency_gaussian_mi(code: PolarCode, ch: BiAwgn) -> float:
    """Efficiency against the Gaussian-modulation mutual information."""
    if not isinstance(ch, BiAwgn):
        raise TypeError("gaussian-MI efficiency applies to the BIAWGN channel only")
    return code.rate / gaussian_mutual_information(ch.snr)


def fer_upper_bound(code: PolarCode, res: ConstructionResult) -> float:
    """Union bound on the frame error rate: sum of pe over information bits."""
    if code.n != res.n:
        raise ValueError("code and construction result have different block sizes")
    if code.channel != res.channel:
        raise ValueError("code and construction result were built for different channels")
    return float(min(1.0, res.pe[code.frozen_mask == 0].sum()))


# ---------------------------------------------------------------------------
# Code-table file format

def _checksum(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def write_code_table(code: PolarCode, path) -> None:
    """Serialize a code to the binary table format (bit-exact, checksummed)."""
    tag, param = channel_tag(code.channel)
    head = CODE_TABLE_MAGIC + struct.pack(
        "<HBBddI",
        CODE_TABLE_VERSION,
        code.n,
        tag,
        param,
        code.target_fer,
        code.quantization.bins,
    )
    mask_bytes = np.packbits(code.frozen_mask, bitorder="little").tobytes()
    body = head + mask_bytes
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<Q", _checksum(body)))


def read_code_table(path) -> PolarCode:
    """Parse and validate a code-table file; raises ValueError on corruption."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 + struct.calcsize("<HBBddI") + 8:
        raise ValueError("code table truncated")
    if blob[:4] != CODE_TABLE_MAGIC:
        raise ValueError("bad code-table magic")
    body, (stored,) = blob[:-8], struct.unpack("<Q", blob[-8:])
    if _checksum(body) != stored:
        raise ValueError("code-table checksum mismatch")
    version, n, tag, param, target_fer, bins = struct.unpack_from("<HBBddI", blob, 4)
    if version != CODE_TABLE_VERSION:
        raise ValueError(f"unsupported code-table version {version}")
    size = 1 << n
    off = 4 + struct.calcsize("<HBBddI")
    mask_bytes = blob[off : off + (size + 7) // 8]
    mask = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8), bitorder="little")[:size]
    return PolarCode(
        n=n,
        frozen_mask=mask.astype(np.uint8),
        channel=channel_from_tag(tag, param),
        target_fer=target_fer,
        quantization=DeGrid(bins=bins),
    )


def code_table_checksum(path) -> int:
    """Checksum recorded in a table file (used in handshakes and reports)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 8:
        raise ValueError("code table truncated")
    return struct.unpack("<Q", blob[-8:])[0]
