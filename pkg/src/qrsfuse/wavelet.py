"""Daubechies-6 discrete wavelet transform with subband reconstruction.

The transform uses half-sample symmetric boundary extension, so a level
with input length ``n`` produces ``(n + 11) // 2`` coefficients per band.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# db6 scaling (reconstruction low-pass) filter
DB6 = np.array([
    0.11154074335010947,
    0.49462389039845306,
    0.7511339080210954,
    0.31525035170919763,
    -0.22626469396543983,
    -0.12976686756726194,
    0.09750160558732304,
    0.027522865530305727,
    -0.03158203931748603,
    0.0005538422011614961,
    0.004777257510945511,
    -0.0010773010853084796,
])

DEFAULT_LEVELS = 5
QRS_BANDS = ("d4", "d5")


class DecompositionError(ValueError):
    pass


class BandError(KeyError):
    pass


@dataclass(frozen=True)
class WaveletFilters:
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @classmethod
    def from_scaling(cls, h):
        h = np.asarray(h, dtype=float)
        k = np.arange(h.size)
        dec_hi = (-1.0) ** (k + 1) * h
        return cls(dec_lo=h[::-1].copy(), dec_hi=dec_hi,
                   rec_lo=h.copy(), rec_hi=dec_hi[::-1].copy())

    def __len__(self):
        return self.dec_lo.size


DB6_FILTERS = WaveletFilters.from_scaling(DB6)


@dataclass(frozen=True)
class Decomposition:
    """Coefficients of a ``levels``-deep DWT.

    ``details[0]`` is d1 (finest); ``approx`` is a_J.
    """
    details: tuple
    approx: np.ndarray
    original_length: int
    boundary_mode: str = "symmetric"

    @property
    def levels(self):
        return len(self.details)

    @property
    def band_names(self):
        return [f"d{i}" for i in range(1, self.levels + 1)] + [f"a{self.levels}"]

    def band(self, name):
        if name == f"a{self.levels}":
            return self.approx
        if name.startswith("d"):
            try:
                i = int(name[1:])
            except ValueError:
                i = 0
            if 1 <= i <= self.levels:
                return self.details[i - 1]
        raise BandError(f"no band {name!r} in a {self.levels}-level decomposition")


def max_level(n, filter_len=len(DB6)):
    """Deepest level for which every stage's input has ``>= filter_len`` samples."""
    level = 0
    while n >= filter_len:
        level += 1
        n = (n + filter_len - 1) // 2
    return level


def dwt_step(x, filters=DB6_FILTERS):
    f = len(filters)
    ext = np.pad(x, f - 1, mode="symmetric")
    a = np.convolve(ext, filters.dec_lo, "valid")[1::2]
    d = np.convolve(ext, filters.dec_hi, "valid")[1::2]
    return a, d


def idwt_step(a, d, filters=DB6_FILTERS):
    """Single-level inverse; either of ``a``/``d`` may be ``None`` (zeros)."""
    ref = a if a is not None else d
    f = len(filters)
    n_out = 2 * ref.size - f + 2
    out = np.zeros(n_out)
    for coeffs, filt in ((a, filters.rec_lo), (d, filters.rec_hi)):
        if coeffs is None:
            continue
        up = np.zeros(2 * coeffs.size)
        up[::2] = coeffs
        out += np.convolve(up, filt)[f - 2:f - 2 + n_out]
    return out


def dwt_decompose(signal, levels=DEFAULT_LEVELS, filters=DB6_FILTERS):
    """Cascade the analysis filter bank ``levels`` times."""
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise DecompositionError("signal must be one-dimensional")
    if levels < 1:
        raise DecompositionError("levels must be >= 1")
    feasible = max_level(x.size, len(filters))
    if levels > feasible:
        raise DecompositionError(
            f"{x.size} samples support at most {feasible} levels, {levels} requested")
    details = []
    a = x
    for _ in range(levels):
        a, d = dwt_step(a, filters)
        details.append(d)
    return Decomposition(tuple(details), a, x.size)


def reconstruct(decomp, bands, filters=DB6_FILTERS):
    """Inverse DWT keeping only ``bands`` (other subbands zeroed).

    Reconstruction is linear, so ``reconstruct(dec, ["d4", "d5"])`` equals the
    sum of the two single-band reconstructions.
    """
    bands = set(bands)
    for name in bands:
        decomp.band(name)       # validates
    J = decomp.levels
    a = decomp.approx if f"a{J}" in bands else None
    for level in range(J, 0, -1):
        d = decomp.details[level - 1] if f"d{level}" in bands else None
        if a is None and d is None:
            continue
        if a is not None:
            # an odd-length input leaves one extra coefficient after the inverse
            a = a[:decomp.details[level - 1].size]
        a = idwt_step(a, d, filters)
    if a is None:
        return np.zeros(decomp.original_length)
    return a[:decomp.original_length]


def reconstruct_band(decomp, band, filters=DB6_FILTERS):
    """Inverse DWT of a single subband (``"d1"``..``"dJ"`` or ``"aJ"``)."""
    return reconstruct(decomp, [band], filters)
