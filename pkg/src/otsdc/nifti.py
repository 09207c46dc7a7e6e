"""Minimal NIfTI-1 reader/writer (single-file ``.nii`` / ``.nii.gz``).

Supports 3D data (or 4D with a single frame) of type uint8, int16, int32,
float32 and float64 in either byte order. Values are returned as float64
with ``scl_slope``/``scl_inter`` applied. Written files are float32 with
unit scaling, in the byte order of the template header. Gzip output uses a
zero mtime so files are byte-reproducible.
"""
from __future__ import annotations

import gzip
import io
import struct
from dataclasses import dataclass

import numpy as np

from .volume import Volume

HEADER_SIZE = 348
VOX_OFFSET = 352
DTYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}
BITPIX = {2: 8, 4: 16, 8: 32, 16: 32, 64: 64}


class NiftiError(ValueError):
    pass


class NiftiMagicError(NiftiError):
    pass


class NiftiDatatypeError(NiftiError):
    pass


class NiftiTruncatedError(NiftiError):
    pass


class NiftiFrameError(NiftiError):
    pass


@dataclass(frozen=True)
class NiftiHeader:
    dims: tuple[int, int, int]
    datatype: int
    pixdim: tuple[float, ...]
    scl_slope: float
    scl_inter: float
    affine: np.ndarray
    endian: str
    vox_offset: int
    raw: bytes

    @property
    def spacing(self) -> tuple[float, float, float]:
        return tuple(abs(p) for p in self.pixdim[1:4])


def _quaternion_affine(b, c, d, qx, qy, qz, pixdim):
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a2) if a2 > 1e-7 else 0.0
    R = np.array([
        [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
        [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
        [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b],
    ])
    qfac = -1.0 if pixdim[0] < 0 else 1.0
    scale = np.array([pixdim[1], pixdim[2], pixdim[3] * qfac])
    out = np.eye(4)
    out[:3, :3] = R * scale
    out[:3, 3] = (qx, qy, qz)
    return out


def parse_header(raw: bytes) -> NiftiHeader:
    if len(raw) < HEADER_SIZE:
        raise NiftiTruncatedError(f"truncated header: {len(raw)} bytes")
    endian = None
    for e in ("<", ">"):
        size = struct.unpack_from(e + "i", raw, 0)[0]
        if size == HEADER_SIZE:
            endian = e
            break
        if size == 540:
            raise NiftiMagicError("NIfTI-2 files are not supported (NIfTI-1 only)")
    if endian is None:
        raise NiftiMagicError("not a NIfTI-1 file (sizeof_hdr != 348)")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        if magic == b"ni1\x00":
            raise NiftiMagicError("two-file NIfTI (.hdr/.img) is not supported")
        raise NiftiMagicError(f"bad NIfTI magic {magic!r}")
    dim = struct.unpack_from(endian + "8h", raw, 40)
    datatype = struct.unpack_from(endian + "h", raw, 70)[0]
    pixdim = struct.unpack_from(endian + "8f", raw, 76)
    vox_offset = int(struct.unpack_from(endian + "f", raw, 108)[0])
    slope, inter = struct.unpack_from(endian + "2f", raw, 112)
    qform_code, sform_code = struct.unpack_from(endian + "2h", raw, 252)
    quat = struct.unpack_from(endian + "6f", raw, 256)
    srow = struct.unpack_from(endian + "12f", raw, 280)

    if datatype not in DTYPES:
        raise NiftiDatatypeError(f"unsupported datatype code {datatype}")
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise NiftiError(f"invalid dim[0] = {ndim}")
    full = [dim[i] if i <= ndim else 1 for i in range(1, 8)]
    if any(d < 1 for d in full):
        raise NiftiError(f"invalid dimensions {full}")
    if any(d > 1 for d in full[3:]):
        raise NiftiFrameError(f"expected a single 3D frame, got dims {full}")
    dims = tuple(full[:3])
    if any(p == 0 for p in pixdim[1:4]):
        raise NiftiError(f"pixdim must be nonzero, got {pixdim[1:4]}")
    if sform_code > 0:
        affine = np.vstack([np.reshape(srow, (3, 4)), [0, 0, 0, 1]])
    elif qform_code > 0:
        affine = _quaternion_affine(*quat, pixdim)
    else:
        affine = np.diag([abs(pixdim[1]), abs(pixdim[2]), abs(pixdim[3]), 1.0])
    return NiftiHeader(dims, datatype, tuple(pixdim), float(slope), float(inter),
                       affine, endian, max(vox_offset, VOX_OFFSET), bytes(raw[:HEADER_SIZE]))


def _read_bytes(path) -> bytes:
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"\x1f\x8b":
        try:
            data = gzip.decompress(data)
        except (EOFError, OSError) as exc:
            raise NiftiTruncatedError(f"corrupt gzip stream in {path}: {exc}") from exc
    return data


def read_volume(path, pe_axis: int = 0) -> Volume:
    """Read a NIfTI-1 file into a float64 :class:`Volume`."""
    raw = _read_bytes(path)
    hdr = parse_header(raw)
    dtype = np.dtype(hdr.endian + DTYPES[hdr.datatype])
    count = int(np.prod(hdr.dims))
    need = hdr.vox_offset + count * dtype.itemsize
    if len(raw) < need:
        raise NiftiTruncatedError(f"truncated data in {path}: {len(raw)} of {need} bytes")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=hdr.vox_offset)
    data = data.astype(np.float64).reshape(hdr.dims, order="F")
    if hdr.scl_slope != 0 and np.isfinite(hdr.scl_slope):
        data = data * hdr.scl_slope + hdr.scl_inter
    return Volume(data, hdr.spacing, pe_axis, hdr)


def default_header(dims, spacing=(1.0, 1.0, 1.0)) -> NiftiHeader:
    raw = bytearray(HEADER_SIZE)
    struct.pack_into("<i", raw, 0, HEADER_SIZE)
    struct.pack_into("<8f", raw, 76, 1.0, *spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<2h", raw, 252, 0, 2)
    struct.pack_into("<12f", raw, 280, spacing[0], 0, 0, 0, 0, spacing[1], 0, 0, 0, 0, spacing[2], 0)
    raw[344:348] = b"n+1\x00"
    return parse_header(_patch(bytes(raw), "<", dims))


def _patch(raw: bytes, e: str, dims) -> bytes:
    """Template header rewritten for float32 data of shape ``dims``."""
    buf = bytearray(raw[:HEADER_SIZE])
    struct.pack_into(e + "8h", buf, 40, 3, *dims, 1, 1, 1, 1)
    struct.pack_into(e + "h", buf, 70, 16)
    struct.pack_into(e + "h", buf, 72, 32)
    struct.pack_into(e + "f", buf, 108, float(VOX_OFFSET))
    struct.pack_into(e + "2f", buf, 112, 1.0, 0.0)
    struct.pack_into(e + "2f", buf, 124, 0.0, 0.0)
    buf[344:348] = b"n+1\x00"
    return bytes(buf)


def encode_volume(v: Volume, like: NiftiHeader | None = None) -> bytes:
    """Serialise ``v`` as an uncompressed NIfTI-1 byte string."""
    if like is None:
        like = v.header if isinstance(v.header, NiftiHeader) else default_header(v.dims, v.spacing)
    e = like.endian
    out = io.BytesIO()
    out.write(_patch(like.raw, e, v.dims))
    out.write(b"\x00" * (VOX_OFFSET - HEADER_SIZE))
    out.write(np.asarray(v.data, dtype=e + "f4").tobytes(order="F"))
    return out.getvalue()


def write_volume(v: Volume, path, like: NiftiHeader | None = None) -> None:
    """Write ``v`` as float32; geometry fields are copied from ``like``."""
    payload = encode_volume(v, like)
    path = str(path)
    with open(path, "wb") as fh:
        if path.endswith(".gz"):
            with gzip.GzipFile(filename="", mode="wb", fileobj=fh, mtime=0, compresslevel=6) as gz:
                gz.write(payload)
        else:
            fh.write(payload)
