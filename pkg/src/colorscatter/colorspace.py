"""sRGB to JzAzBz and grayscale conversion.

JzAzBz (Safdar, Cui, Kim & Luo 2017, Opt. Express 25:15131) is an
approximately perceptually uniform color space: Euclidean distances between
coordinates track perceived color differences.  All color metrics in this
package operate on these coordinates.

Pipeline: sRGB codes -> linear RGB (IEC 61966-2-1 EOTF) -> XYZ (D65) ->
sharpened LMS -> PQ nonlinearity -> Iz/az/bz -> Jz.  The LMS channels are
normalized so that the D65 white (and hence every sRGB gray) lands exactly
on the neutral axis (az = bz = 0), and scaled so that white corresponds to
an absolute luminance of 100 cd/m^2, the conventional SDR diffuse white.

All math is done in float64; the PQ curve is numerically stiff near zero.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError

# sRGB primaries with D65 white point (IEC 61966-2-1).
SRGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])

# Relative luminance weights for linear RGB (Rec. 709 / sRGB Y row).
LUMA_WEIGHTS = SRGB_TO_XYZ[1]

# XYZ' -> LMS and PQ'd LMS -> Iz/az/bz matrices from Safdar et al. (2017).
_M_LMS = np.array([
    [0.41478972, 0.579999, 0.0146480],
    [-0.2015100, 1.120649, 0.0531008],
    [-0.0166008, 0.264800, 0.6684799],
])
_M_IAB = np.array([
    [0.5, 0.5, 0.0],
    [3.524000, -4.066708, 0.542708],
    [0.199076, 1.096799, -1.295875],
])
_B = 1.15
_G = 0.66
_PQ_ETA = 2610.0 / 2**14
_PQ_RHO = 1.7 * 2523.0 / 2**5
_PQ_C1 = 3424.0 / 2**12
_PQ_C2 = 2413.0 / 2**7
_PQ_C3 = 2392.0 / 2**7
_D = -0.56
_D0 = 1.6295499532821566e-11

# Diffuse-white luminance assumed for sRGB content, cd/m^2.
WHITE_LUMINANCE = 100.0

# Per-axis (Jz, az, bz) extremes over the full 256^3 sRGB cube, frozen from a
# one-time exhaustive scan (re-derived by the test suite).  These define the
# canonical axis ranges used for histogram binning downstream.
JZAZBZ_AXIS_RANGES = np.array([
    [0.0, 0.16912157959505325],
    [-0.09337962067820703, 0.10992581636673797],
    [-0.15740340999500824, 0.11607010198292905],
])

# Midpoints of the canonical ranges: the octant boundaries.
JZAZBZ_AXIS_MIDPOINTS = JZAZBZ_AXIS_RANGES.mean(axis=1)


def srgb_to_linear(code):
    """Decode 8-bit sRGB channel codes (0-255) to linear intensity in [0, 1].

    Standard piecewise sRGB EOTF: a linear segment below the 0.04045
    threshold, a 2.4-power segment above.
    """
    c = np.asarray(code, dtype=np.float64) / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _pq(lum):
    t = (lum / 10000.0) ** _PQ_ETA
    return ((_PQ_C1 + _PQ_C2 * t) / (1.0 + _PQ_C3 * t)) ** _PQ_RHO


def _xyz_to_lms(xyz):
    x, y, z = np.moveaxis(xyz, -1, 0)
    xp = _B * x - (_B - 1.0) * z
    yp = _G * y - (_G - 1.0) * x
    return np.stack([xp, yp, z], axis=-1) @ _M_LMS.T


# LMS of the D65 white; dividing by it puts every gray exactly on the
# neutral axis before the opponent transform.
_LMS_WHITE = _xyz_to_lms(SRGB_TO_XYZ @ np.ones(3))


def rgb_to_jzazbz(rgb):
    """Convert sRGB codes to JzAzBz coordinates.

    Accepts an array of shape (..., 3) holding 8-bit channel codes and
    returns float64 (Jz, az, bz) triples of the same leading shape.
    """
    rgb = np.asarray(rgb)
    if rgb.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {rgb.shape}")
    lin = srgb_to_linear(rgb)
    xyz = lin @ SRGB_TO_XYZ.T
    lms = _xyz_to_lms(xyz) * (WHITE_LUMINANCE / _LMS_WHITE)
    iab = _pq(lms) @ _M_IAB.T
    iz = iab[..., 0]
    jz = ((1.0 + _D) * iz) / (1.0 + _D * iz) - _D0
    return np.stack([jz, iab[..., 1], iab[..., 2]], axis=-1)


def image_to_jzazbz(img):
    """Convert an (H, W, 3) sRGB raster to an (H, W, 3) JzAzBz raster."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise DegenerateInputError(f"expected nonempty (H, W, 3) raster, got shape {img.shape}")
    return rgb_to_jzazbz(img)


def to_grayscale(img):
    """Relative luminance of an (H, W, 3) sRGB raster, in [0, 1].

    Computed from linear (EOTF-decoded) RGB with Rec. 709 weights.
    """
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[-1] != 3 or img.shape[0] == 0 or img.shape[1] == 0:
        raise DegenerateInputError(f"expected nonempty (H, W, 3) raster, got shape {img.shape}")
    return srgb_to_linear(img) @ LUMA_WEIGHTS


def scan_gamut_ranges(chunk=32):
    """Exhaustively scan the 256^3 sRGB cube for per-axis JzAzBz extremes.

    Slow (tens of seconds); used once to freeze JZAZBZ_AXIS_RANGES and by
    the test suite to re-derive it.
    """
    levels = np.arange(256)
    mins = np.full(3, np.inf)
    maxs = np.full(3, -np.inf)
    for r0 in range(0, 256, chunk):
        r, g, b = np.meshgrid(levels[r0:r0 + chunk], levels, levels, indexing="ij")
        out = rgb_to_jzazbz(np.stack([r, g, b], axis=-1).reshape(-1, 3))
        mins = np.minimum(mins, out.min(axis=0))
        maxs = np.maximum(maxs, out.max(axis=0))
    return np.stack([mins, maxs], axis=1)
