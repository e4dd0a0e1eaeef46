"""Dithered one-bit quantization and covariance recovery from sign streams.

Two independent uniform dithers are added to the complex snapshots before
taking componentwise signs; the covariance is then recovered from the two
quaternary streams alone (the dither values are never stored). Scaling by
the dither range makes the estimator unbiased whenever every signal
component stays inside [-T, T].
"""

import struct
import warnings
from dataclasses import dataclass

import numpy as np

ONE_BIT_MAGIC = b"OB1B"
ONE_BIT_VERSION = 1


class DynamicRangeWarning(UserWarning):
    """Signal components reached the dither range; unbiasedness is voided."""


class DynamicRangeError(ValueError):
    """Fixed dither scale too small for the data it was applied to."""


@dataclass(frozen=True)
class DitherParams:
    """Uniform dither range (componentwise on [-scale, scale]) and draw seed."""

    scale: float
    seed: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("dither scale must be positive")


@dataclass(frozen=True)
class OneBitSet:
    """Two quaternary sign streams in {+-1 +-1j} plus the dither scale used."""

    first: np.ndarray
    second: np.ndarray
    scale: float

    def __post_init__(self):
        for stream in (self.first, self.second):
            if not (np.all(np.abs(stream.real) == 1) and np.all(np.abs(stream.imag) == 1)):
                raise ValueError("stream entries must be +-1 +-1j")

    @property
    def num_sensors(self):
        return self.first.shape[0]

    @property
    def num_snapshots(self):
        return self.first.shape[1]


@dataclass(frozen=True)
class CovarianceEstimate:
    """Symmetrized covariance estimate and the one-sided product it came from."""

    matrix: np.ndarray
    one_sided: np.ndarray
    num_snapshots: int


def complex_sign(a):
    """Componentwise sign: sgn(re) + j sgn(im), with sgn(0) = +1.

    Works on scalars and arrays; always returns complex with parts +-1.
    """
    a = np.asarray(a)
    re = np.where(a.real >= 0, 1.0, -1.0)
    im = np.where(a.imag >= 0, 1.0, -1.0)
    out = re + 1j * im
    return out if out.ndim else complex(out)


def _dither_streams(params, shape):
    # one child stream per ADC branch, each vectorized over all snapshots
    children = np.random.SeedSequence(params.seed).spawn(2)
    taus = []
    for child in children:
        rng = np.random.default_rng(child)
        re = rng.uniform(-params.scale, params.scale, shape)
        im = rng.uniform(-params.scale, params.scale, shape)
        taus.append(re + 1j * im)
    return taus


def quantize(snapshots, params):
    """One-bit quantize a snapshot set with two independent uniform dithers.

    Emits a ``DynamicRangeWarning`` when any |Re x| or |Im x| reaches the
    dither scale (the unbiasedness precondition fails there). Output is
    bitwise reproducible from (snapshots, scale, seed).
    """
    x = snapshots.data
    peak = max(np.max(np.abs(x.real)), np.max(np.abs(x.imag)))
    if peak >= params.scale:
        warnings.warn(
            f"signal peak component {peak:.6g} reaches the dither scale "
            f"{params.scale:.6g}; the covariance estimate will be biased",
            DynamicRangeWarning,
            stacklevel=2,
        )
    tau1, tau2 = _dither_streams(params, x.shape)
    return OneBitSet(
        first=complex_sign(x + tau1),
        second=complex_sign(x + tau2),
        scale=params.scale,
    )


def pick_dither_scale(snapshots, margin=1.2):
    """Dither scale covering every observed component with a safety margin.

    Returns margin times the largest |Re| or |Im| entry; all-zero data
    falls back to a scale of 1.0 so the quantizer stays well defined.
    """
    if margin < 1:
        raise ValueError("margin must be >= 1")
    x = snapshots.data
    if x.size == 0:
        raise ValueError("empty snapshot set")
    peak = max(np.max(np.abs(x.real)), np.max(np.abs(x.imag)))
    scale = margin * peak
    return float(scale) if scale > 0 else 1.0


def estimate_covariance(bits):
    """Unbiased covariance estimate from the two sign streams.

    The one-sided product is scale^2 / N times the cross outer-product sum;
    symmetrizing gives an exactly Hermitian matrix. All sums involve only
    the integers {-2, 0, 2}, so the result is exact in double precision
    regardless of summation order.
    """
    n = bits.num_snapshots
    if n < 1:
        raise ValueError("need at least one snapshot")
    one_sided = (bits.scale**2 / n) * (bits.first @ bits.second.conj().T)
    return CovarianceEstimate(
        matrix=(one_sided + one_sided.conj().T) / 2.0,
        one_sided=one_sided,
        num_snapshots=n,
    )


def pack_one_bit(bits):
    """Pack sign streams to bits: per sample (Re r1, Im r1, Re r2, Im r2).

    Bit 1 encodes +1, bit 0 encodes -1, MSB-first within each byte; every
    snapshot is padded to a byte boundary. Shape (snapshots, ceil(M/2)).
    """
    m, n = bits.first.shape
    flags = np.empty((n, m, 4), dtype=bool)
    flags[:, :, 0] = bits.first.real.T > 0
    flags[:, :, 1] = bits.first.imag.T > 0
    flags[:, :, 2] = bits.second.real.T > 0
    flags[:, :, 3] = bits.second.imag.T > 0
    return np.packbits(flags.reshape(n, 4 * m), axis=1)


def unpack_one_bit(packed, num_sensors, num_snapshots, scale):
    flags = np.unpackbits(packed, axis=1, count=4 * num_sensors).astype(bool)
    flags = flags.reshape(num_snapshots, num_sensors, 4)
    signs = np.where(flags, 1.0, -1.0)
    first = (signs[:, :, 0] + 1j * signs[:, :, 1]).T
    second = (signs[:, :, 2] + 1j * signs[:, :, 3]).T
    return OneBitSet(first=first, second=second, scale=scale)


def write_one_bit(path, bits):
    """Write the OB1B binary format: header (with the scale) + packed bits."""
    with open(path, "wb") as fh:
        fh.write(ONE_BIT_MAGIC)
        fh.write(struct.pack("<IIId", ONE_BIT_VERSION, bits.num_sensors,
                             bits.num_snapshots, bits.scale))
        fh.write(pack_one_bit(bits).tobytes())


def read_one_bit(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != ONE_BIT_MAGIC:
            raise ValueError(f"not a one-bit file (magic {magic!r})")
        version, m, n, scale = struct.unpack("<IIId", fh.read(20))
        if version != ONE_BIT_VERSION:
            raise ValueError(f"unsupported one-bit file version {version}")
        row = (4 * m + 7) // 8
        packed = np.frombuffer(fh.read(row * n), dtype=np.uint8).reshape(n, row)
    return unpack_one_bit(packed, m, n, scale)


def quantize_snapshot_file(snapshots, margin=None, fixed_scale=None, seed=0):
    """Calibrate-or-fix the scale, then quantize; fixed scales that clip raise."""
    if fixed_scale is not None:
        x = snapshots.data
        peak = max(np.max(np.abs(x.real)), np.max(np.abs(x.imag)))
        if peak >= fixed_scale:
            raise DynamicRangeError(
                f"fixed dither scale {fixed_scale:.6g} does not cover the data "
                f"(peak component {peak:.6g})"
            )
        scale = float(fixed_scale)
    else:
        scale = pick_dither_scale(snapshots, margin=1.2 if margin is None else margin)
    return quantize(snapshots, DitherParams(scale=scale, seed=seed))
