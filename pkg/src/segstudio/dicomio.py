"""Minimal DICOM series ingest and emit.

Exactly one transfer syntax is supported: Part-10, explicit VR little
endian, uncompressed 16-bit pixel data.  Anything else is a clean
``UnsupportedError`` — the point is the workflow, not a codec zoo.

Patient identifiers are replaced with stable pseudonyms at ingest; raw
names/IDs never survive past the parser.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (ArgumentError, GeometryError, MixedSeriesError, ParseError,
                     UnsupportedError)
from .geometry import VolumeGrid, _cross, _dot

TRANSFER_SYNTAX_EXPLICIT_LE = "1.2.840.10008.1.2.1"
SOP_CLASS_CT = "1.2.840.10008.5.1.4.1.1.2"
_IMPLEMENTATION_UID = "2.25.313370421660841514616"

_SPACING_TOL = 1e-3  # mm, uniform-slice-gap tolerance

# Tags this package reads/writes, as (group, element).
TAG_META_GROUP_LENGTH = (0x0002, 0x0000)
TAG_META_VERSION = (0x0002, 0x0001)
TAG_MEDIA_SOP_CLASS = (0x0002, 0x0002)
TAG_MEDIA_SOP_INSTANCE = (0x0002, 0x0003)
TAG_TRANSFER_SYNTAX = (0x0002, 0x0010)
TAG_IMPLEMENTATION = (0x0002, 0x0012)
TAG_SOP_CLASS = (0x0008, 0x0016)
TAG_SOP_INSTANCE = (0x0008, 0x0018)
TAG_MODALITY = (0x0008, 0x0060)
TAG_PATIENT_NAME = (0x0010, 0x0010)
TAG_PATIENT_ID = (0x0010, 0x0020)
TAG_STUDY_UID = (0x0020, 0x000D)
TAG_SERIES_UID = (0x0020, 0x000E)
TAG_INSTANCE_NUMBER = (0x0020, 0x0013)
TAG_IMAGE_POSITION = (0x0020, 0x0032)
TAG_IMAGE_ORIENTATION = (0x0020, 0x0037)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_SAMPLES_PER_PIXEL = (0x0028, 0x0002)
TAG_PHOTOMETRIC = (0x0028, 0x0004)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_BITS_STORED = (0x0028, 0x0101)
TAG_HIGH_BIT = (0x0028, 0x0102)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

_LONG_VRS = {"OB", "OW", "OF", "SQ", "UT", "UN"}
_UNDEFINED = 0xFFFFFFFF


# ---------------------------------------------------------------- writing

def _pad(value: bytes, pad_byte: bytes) -> bytes:
    return value + pad_byte if len(value) % 2 else value


def _encode_element(tag: tuple[int, int], vr: str, value: bytes) -> bytes:
    head = struct.pack("<HH", tag[0], tag[1]) + vr.encode("ascii")
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    if len(value) > 0xFFFF:
        raise ArgumentError(f"value too long for short VR {vr}")
    return head + struct.pack("<H", len(value)) + value


def _el_str(tag, vr: str, text: str) -> bytes:
    pad = b"\x00" if vr == "UI" else b" "
    return _encode_element(tag, vr, _pad(text.encode("ascii"), pad))


def _el_us(tag, value: int) -> bytes:
    return _encode_element(tag, "US", struct.pack("<H", value))


def format_ds(value: float) -> str:
    """Decimal-string form of a float, <= 16 chars per the DS VR."""
    text = repr(float(value))
    if len(text) <= 16:
        return text
    return f"{value:.10g}"


def _el_ds(tag, values) -> bytes:
    return _el_str(tag, "DS", "\\".join(format_ds(v) for v in values))


def pseudonymize(patient_id: str) -> str:
    """Stable pseudonym for a patient identifier.

    Idempotent: re-ingesting already-pseudonymized files (e.g. staged
    copies) keeps the same reference.
    """
    if patient_id.startswith("anon-") and len(patient_id) == 15:
        return patient_id
    return "anon-" + hashlib.sha256(patient_id.encode("utf-8")).hexdigest()[:10]


def derive_uid(*parts: str) -> str:
    """Deterministic UID in the 2.25 (UUID-derived) numeric space."""
    digest = hashlib.sha256("/".join(parts).encode("utf-8")).digest()
    return "2.25." + str(int.from_bytes(digest[:12], "big"))


def write_ct_slice(*, study_uid: str, series_uid: str, sop_uid: str,
                   instance_number: int, rows: int, cols: int,
                   pixel_spacing: tuple[float, float], slice_thickness: float,
                   position: tuple[float, float, float],
                   orientation: tuple[float, ...],
                   pixels: np.ndarray, patient_id: str = "anonymous",
                   modality: str = "CT") -> bytes:
    """One Part-10 explicit-VR-LE file holding a signed 16-bit slice."""
    pixels = np.ascontiguousarray(pixels, dtype="<i2")
    if pixels.shape != (rows, cols):
        raise ArgumentError(f"pixel array shape {pixels.shape} != ({rows}, {cols})")

    meta_body = b"".join([
        _encode_element(TAG_META_VERSION, "OB", b"\x00\x01"),
        _el_str(TAG_MEDIA_SOP_CLASS, "UI", SOP_CLASS_CT),
        _el_str(TAG_MEDIA_SOP_INSTANCE, "UI", sop_uid),
        _el_str(TAG_TRANSFER_SYNTAX, "UI", TRANSFER_SYNTAX_EXPLICIT_LE),
        _el_str(TAG_IMPLEMENTATION, "UI", _IMPLEMENTATION_UID),
    ])
    meta = _encode_element(TAG_META_GROUP_LENGTH, "UL", struct.pack("<I", len(meta_body))) + meta_body

    dataset = b"".join([
        _el_str(TAG_SOP_CLASS, "UI", SOP_CLASS_CT),
        _el_str(TAG_SOP_INSTANCE, "UI", sop_uid),
        _el_str(TAG_MODALITY, "CS", modality),
        _el_str(TAG_PATIENT_NAME, "PN", "anonymous"),
        _el_str(TAG_PATIENT_ID, "LO", patient_id),
        _el_ds(TAG_SLICE_THICKNESS, [slice_thickness]),
        _el_str(TAG_STUDY_UID, "UI", study_uid),
        _el_str(TAG_SERIES_UID, "UI", series_uid),
        _el_str(TAG_INSTANCE_NUMBER, "IS", str(instance_number)),
        _el_ds(TAG_IMAGE_POSITION, position),
        _el_ds(TAG_IMAGE_ORIENTATION, orientation),
        _el_us(TAG_SAMPLES_PER_PIXEL, 1),
        _el_str(TAG_PHOTOMETRIC, "CS", "MONOCHROME2"),
        _el_us(TAG_ROWS, rows),
        _el_us(TAG_COLS, cols),
        _el_ds(TAG_PIXEL_SPACING, pixel_spacing),
        _el_us(TAG_BITS_ALLOCATED, 16),
        _el_us(TAG_BITS_STORED, 16),
        _el_us(TAG_HIGH_BIT, 15),
        _el_us(TAG_PIXEL_REPRESENTATION, 1),
        _el_ds(TAG_RESCALE_INTERCEPT, [0.0]),
        _el_ds(TAG_RESCALE_SLOPE, [1.0]),
        _encode_element(TAG_PIXEL_DATA, "OW", pixels.tobytes()),
    ])
    return b"\x00" * 128 + b"DICM" + meta + dataset


# ---------------------------------------------------------------- parsing

class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError("truncated DICOM file")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    @property
    def remaining(self) -> int:
        return len(self.buf) - self.pos


def _read_element(r: _Reader) -> tuple[tuple[int, int], str, bytes]:
    group, elem = struct.unpack("<HH", r.take(4))
    if group == 0xFFFE:  # item/delimiter: implicit structure, 4-byte length
        (length,) = struct.unpack("<I", r.take(4))
        value = r.take(length) if length != _UNDEFINED else b""
        return (group, elem), "", value
    vr = r.take(2).decode("ascii", errors="replace")
    if not vr.isalpha():
        raise UnsupportedError("file does not use explicit VR little endian")
    if vr in _LONG_VRS:
        r.take(2)
        (length,) = struct.unpack("<I", r.take(4))
    else:
        (length,) = struct.unpack("<H", r.take(2))
    if length == _UNDEFINED:
        if vr == "SQ":
            _skip_undefined_sequence(r)
            return (group, elem), vr, b""
        raise UnsupportedError(f"undefined-length {vr} element (encapsulated data?)")
    return (group, elem), vr, r.take(length)


def _skip_undefined_sequence(r: _Reader) -> None:
    while True:
        tag, _, _ = _read_element(r)
        if tag == (0xFFFE, 0xE0DD):
            return


def _iter_dataset(r: _Reader):
    while r.remaining > 0:
        yield _read_element(r)


def _text(value: bytes) -> str:
    return value.decode("ascii", errors="replace").strip("\x00 ").strip()


def _floats(value: bytes) -> list[float]:
    return [float(p) for p in _text(value).split("\\") if p]


def _u16(value: bytes) -> int:
    return struct.unpack("<H", value[:2])[0]


@dataclass
class _SliceRecord:
    series_uid: str
    study_uid: str
    modality: str
    patient_id: str
    rows: int
    cols: int
    pixel_spacing: tuple[float, float]
    slice_thickness: float | None
    position: tuple[float, float, float]
    orientation: tuple[float, ...]
    pixels: np.ndarray  # int16, post-rescale


@dataclass(eq=False)
class ImageSeries:
    """A parsed 3D acquisition: geometry plus post-rescale intensities."""

    study_id: str
    series_id: str
    grid: VolumeGrid
    voxels: np.ndarray  # int16, shape (slices, rows, cols), read-only
    modality: str
    patient_ref: str  # pseudonym; raw identifiers are dropped at ingest

    def __post_init__(self):
        if self.voxels.dtype != np.int16 or self.voxels.shape != self.grid.shape:
            raise ArgumentError("series voxels must be int16 in grid shape")
        self.voxels.flags.writeable = False

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageSeries):
            return NotImplemented
        return (self.study_id, self.series_id, self.grid, self.modality, self.patient_ref) == \
               (other.study_id, other.series_id, other.grid, other.modality, other.patient_ref) \
               and bool(np.array_equal(self.voxels, other.voxels))


def _parse_slice(payload: bytes) -> _SliceRecord:
    if len(payload) < 132 or payload[128:132] != b"DICM":
        raise ParseError("not a DICOM Part-10 file (missing DICM magic)")
    r = _Reader(payload, 132)

    tag, vr, value = _read_element(r)
    if tag != TAG_META_GROUP_LENGTH:
        raise ParseError("file meta group must start with its group length")
    (meta_len,) = struct.unpack("<I", value)
    meta = _Reader(payload, r.pos)
    meta_end = r.pos + meta_len
    transfer_syntax = None
    while meta.pos < meta_end:
        tag, vr, value = _read_element(meta)
        if tag == TAG_TRANSFER_SYNTAX:
            transfer_syntax = _text(value)
    if transfer_syntax != TRANSFER_SYNTAX_EXPLICIT_LE:
        raise UnsupportedError(
            f"transfer syntax {transfer_syntax!r} not supported; "
            f"only explicit VR little endian ({TRANSFER_SYNTAX_EXPLICIT_LE})")

    elements: dict[tuple[int, int], tuple[str, bytes]] = {}
    for tag, vr, value in _iter_dataset(_Reader(payload, meta_end)):
        if tag[0] != 0xFFFE:
            elements[tag] = (vr, value)

    def required(tag, label: str) -> bytes:
        if tag not in elements:
            raise ParseError(f"missing required tag {label} ({tag[0]:04X},{tag[1]:04X})")
        return elements[tag][1]

    bits_allocated = _u16(required(TAG_BITS_ALLOCATED, "BitsAllocated"))
    if bits_allocated != 16:
        raise UnsupportedError(f"BitsAllocated={bits_allocated}; only 16 supported")
    rows = _u16(required(TAG_ROWS, "Rows"))
    cols = _u16(required(TAG_COLS, "Columns"))
    spacing = _floats(required(TAG_PIXEL_SPACING, "PixelSpacing"))
    position = _floats(required(TAG_IMAGE_POSITION, "ImagePositionPatient"))
    orientation = _floats(required(TAG_IMAGE_ORIENTATION, "ImageOrientationPatient"))
    if len(spacing) != 2 or len(position) != 3 or len(orientation) != 6:
        raise ParseError("malformed geometry tag (PixelSpacing/Position/Orientation)")

    slope = 1.0
    intercept = 0.0
    if TAG_RESCALE_SLOPE in elements:
        slope = _floats(elements[TAG_RESCALE_SLOPE][1])[0]
    if TAG_RESCALE_INTERCEPT in elements:
        intercept = _floats(elements[TAG_RESCALE_INTERCEPT][1])[0]

    signed = elements.get(TAG_PIXEL_REPRESENTATION)
    signed = bool(_u16(signed[1])) if signed else False
    raw = required(TAG_PIXEL_DATA, "PixelData")
    if len(raw) != rows * cols * 2:
        raise ParseError(f"PixelData holds {len(raw)} bytes; expected {rows * cols * 2}")
    pixels = np.frombuffer(raw, dtype="<i2" if signed else "<u2").reshape(rows, cols)
    if slope != 1.0 or intercept != 0.0 or not signed:
        pixels = np.rint(pixels.astype(np.float64) * slope + intercept).astype(np.int16)
    else:
        pixels = pixels.astype(np.int16)

    required(TAG_SOP_INSTANCE, "SOPInstanceUID")
    thickness = _floats(elements[TAG_SLICE_THICKNESS][1])[0] if TAG_SLICE_THICKNESS in elements else None
    return _SliceRecord(
        series_uid=_text(required(TAG_SERIES_UID, "SeriesInstanceUID")),
        study_uid=_text(required(TAG_STUDY_UID, "StudyInstanceUID")),
        modality=_text(elements[TAG_MODALITY][1]) if TAG_MODALITY in elements else "OT",
        patient_id=_text(elements[TAG_PATIENT_ID][1]) if TAG_PATIENT_ID in elements else "",
        rows=rows, cols=cols,
        pixel_spacing=(spacing[0], spacing[1]),
        slice_thickness=thickness,
        position=(position[0], position[1], position[2]),
        orientation=tuple(orientation),
        pixels=pixels,
    )


def parse_series(files: list[bytes]) -> ImageSeries:
    """Assemble one ImageSeries from a set of Part-10 slice files.

    Slices are sorted by the projection of their position onto the slice
    normal; gaps must be uniform within 1 µm.  All files must belong to one
    series and share in-plane geometry.
    """
    if not files:
        raise ParseError("no files supplied")
    records = [_parse_slice(f) for f in files]
    first = records[0]
    if len({rec.series_uid for rec in records}) != 1:
        raise MixedSeriesError("upload mixes more than one SeriesInstanceUID")
    for rec in records[1:]:
        if (rec.rows, rec.cols) != (first.rows, first.cols):
            raise GeometryError("slices disagree on Rows/Columns")
        if rec.pixel_spacing != first.pixel_spacing or rec.orientation != first.orientation:
            raise GeometryError("slices disagree on PixelSpacing/Orientation")
        if rec.study_uid != first.study_uid:
            raise GeometryError("slices disagree on StudyInstanceUID")

    col_cos = first.orientation[0:3]
    row_cos = first.orientation[3:6]
    normal = _cross(col_cos, row_cos)
    records.sort(key=lambda rec: _dot(rec.position, normal))

    offsets = [_dot(rec.position, normal) for rec in records]
    if len(records) > 1:
        gaps = [b - a for a, b in zip(offsets, offsets[1:])]
        if min(gaps) <= 0:
            raise GeometryError("slice positions are not strictly monotone along the normal")
        if max(gaps) - min(gaps) > _SPACING_TOL:
            raise GeometryError(
                f"non-uniform slice spacing: gaps range {min(gaps):.4f}..{max(gaps):.4f} mm")
        slice_spacing = sum(gaps) / len(gaps)
    else:
        slice_spacing = first.slice_thickness or 1.0

    try:
        grid = VolumeGrid(
            rows=first.rows, cols=first.cols, slices=len(records),
            pixel_spacing=first.pixel_spacing, slice_spacing=slice_spacing,
            origin=records[0].position, col_cos=col_cos, row_cos=row_cos)
    except ArgumentError as exc:
        raise GeometryError(f"invalid series geometry: {exc}") from exc

    voxels = np.stack([rec.pixels for rec in records]).astype(np.int16)
    return ImageSeries(
        study_id=first.study_uid, series_id=first.series_uid, grid=grid,
        voxels=voxels, modality=first.modality,
        patient_ref=pseudonymize(first.patient_id))


def series_to_files(series: ImageSeries) -> list[tuple[str, bytes]]:
    """Re-encode a series as Part-10 slice files (staging, export)."""
    grid = series.grid
    n = grid.normal
    files = []
    for k in range(grid.slices):
        pos = tuple(grid.origin[a] + k * grid.slice_spacing * n[a] for a in range(3))
        sop_uid = derive_uid(series.series_id, "slice", str(k))
        payload = write_ct_slice(
            study_uid=series.study_id, series_uid=series.series_id, sop_uid=sop_uid,
            instance_number=k + 1, rows=grid.rows, cols=grid.cols,
            pixel_spacing=grid.pixel_spacing, slice_thickness=grid.slice_spacing,
            position=pos, orientation=grid.col_cos + grid.row_cos,
            pixels=series.voxels[k], patient_id=series.patient_ref,
            modality=series.modality)
        files.append((f"slice-{k + 1:04d}.dcm", payload))
    return files
