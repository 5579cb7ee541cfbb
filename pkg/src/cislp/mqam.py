"""Unit-energy rectangular M-QAM constellations and hard-decision detection.

Every constellation is a product grid ``real_levels x imag_levels`` scaled to
unit average power. Coordinates at the outermost level of an axis are
*extreme*: their detection region is unbounded on the outer side, so a
precoder may push the received sample further out. All other coordinates are
*interior* and must be reproduced exactly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "SUPPORTED_ORDERS",
    "Axis",
    "CoordClass",
    "CoordinateClass",
    "ConstellationSpec",
    "build_constellation",
    "classify",
    "detect",
    "detect_many",
    "theoretical_ser",
]

SUPPORTED_ORDERS = (4, 8, 16)

# raw odd-integer levels per axis, before the 1/sqrt(2) and order scale
_RAW_LEVELS = {
    4: ((-1.0, 1.0), (-1.0, 1.0)),
    8: ((-3.0, -1.0, 1.0, 3.0), (-1.0, 1.0)),
    16: ((-3.0, -1.0, 1.0, 3.0), (-3.0, -1.0, 1.0, 3.0)),
}
_SCALE = {4: 1.0, 8: 1.0 / math.sqrt(3.0), 16: 1.0 / math.sqrt(5.0)}


class Axis(str, enum.Enum):
    REAL = "real"
    IMAG = "imag"


class CoordClass(str, enum.Enum):
    INTERIOR = "Interior"
    EXTREME = "Extreme"


@dataclass(frozen=True)
class CoordinateClass:
    axis: Axis
    cls: CoordClass
    sign: int

    @property
    def is_extreme(self) -> bool:
        return self.cls is CoordClass.EXTREME


@dataclass(frozen=True, eq=False)
class ConstellationSpec:
    """Unit-average-power rectangular QAM constellation.

    Points are ordered lexicographically by (real level, imag level), so
    point ``k`` has real level index ``k // len(imag_levels)`` and imag level
    index ``k % len(imag_levels)``.
    """

    order: int
    points: np.ndarray
    real_levels: np.ndarray
    imag_levels: np.ndarray
    scale: float

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.order)))

    @property
    def n_imag(self) -> int:
        return len(self.imag_levels)

    def level_indices(self, point_index: int) -> tuple[int, int]:
        return divmod(int(point_index), self.n_imag)

    def index_of(self, real_index: int, imag_index: int) -> int:
        return int(real_index) * self.n_imag + int(imag_index)

    def __repr__(self) -> str:
        return f"ConstellationSpec(order={self.order})"


@lru_cache(maxsize=None)
def build_constellation(order: int) -> ConstellationSpec:
    """Build the unit-average-power ``order``-QAM constellation.

    Raises
    ------
    ValueError
        If ``order`` is not one of 4, 8 or 16.
    """
    if order not in _RAW_LEVELS:
        raise ValueError(
            f"unsupported QAM order {order!r}; accepted orders are "
            f"{', '.join(map(str, SUPPORTED_ORDERS))}"
        )
    raw_re, raw_im = _RAW_LEVELS[order]
    scale = _SCALE[order]
    re = np.asarray(raw_re) * scale / math.sqrt(2.0)
    im = np.asarray(raw_im) * scale / math.sqrt(2.0)
    points = (re[:, None] + 1j * im[None, :]).ravel()
    for arr in (re, im, points):
        arr.setflags(write=False)
    return ConstellationSpec(order=order, points=points, real_levels=re,
                             imag_levels=im, scale=scale)


def _axis_class(levels: np.ndarray, idx: int, axis: Axis) -> CoordinateClass:
    value = levels[idx]
    extreme = idx == 0 or idx == len(levels) - 1
    return CoordinateClass(
        axis=axis,
        cls=CoordClass.EXTREME if extreme else CoordClass.INTERIOR,
        sign=1 if value > 0 else -1,
    )


def classify(spec: ConstellationSpec,
             point_index: int) -> tuple[CoordinateClass, CoordinateClass]:
    """Return the (real, imag) coordinate classes of a constellation point."""
    if not 0 <= point_index < spec.order:
        raise IndexError(f"point index {point_index} out of range for "
                         f"{spec.order}-QAM")
    ir, ii = spec.level_indices(point_index)
    return (_axis_class(spec.real_levels, ir, Axis.REAL),
            _axis_class(spec.imag_levels, ii, Axis.IMAG))


def _slice(levels: np.ndarray, values: np.ndarray) -> np.ndarray:
    # ties at a midpoint go to the lower level
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    return np.searchsorted(thresholds, values, side="left")


def detect_many(spec: ConstellationSpec, samples) -> np.ndarray:
    """Vectorized :func:`detect` over an array of samples."""
    samples = np.asarray(samples, dtype=complex)
    if not np.all(np.isfinite(samples)):
        raise ValueError("cannot detect a non-finite sample")
    ir = _slice(spec.real_levels, samples.real)
    ii = _slice(spec.imag_levels, samples.imag)
    return ir * spec.n_imag + ii


def detect(spec: ConstellationSpec, sample: complex) -> int:
    """Nearest-point hard decision on the unit constellation.

    Rectangular grids make this an independent threshold decision per axis;
    samples beyond the outermost level map to the extreme level.
    """
    return int(detect_many(spec, np.asarray([sample]))[0])


def _qfunc(x):
    from scipy.special import erfc
    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


def theoretical_ser(order: int, snr) -> np.ndarray:
    """Exact symbol error rate of ``order``-QAM in AWGN at linear SNR ``snr``.

    SNR is the ratio of average symbol energy to complex noise variance.
    """
    spec = build_constellation(order)
    snr = np.asarray(snr, dtype=float)
    p_ok = 1.0
    for levels in (spec.real_levels, spec.imag_levels):
        n = len(levels)
        half_gap = 0.5 * (levels[1] - levels[0])
        # per-axis noise std is sqrt(1 / (2 snr))
        p_axis = 2.0 * (1.0 - 1.0 / n) * _qfunc(half_gap * np.sqrt(2.0 * snr))
        p_ok = p_ok * (1.0 - p_axis)
    return 1.0 - p_ok
