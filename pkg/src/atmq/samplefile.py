"""Binary sample files and CSV export.

Layout (all integers little-endian)::

    b"ATMQ"                      magic
    u16                          format version (1)
    u32 + bytes                  canonical config JSON (UTF-8)
    u32 + bytes                  header JSON: columns, record count, array list,
                                 resolved aperture radii and offsets, pilot stats
    M x C float64                records, one row per realization
    float64 arrays               accumulators, in header order, C order
    u64                          CRC-64/WE of everything above
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import crcmod.predefined
import numpy as np

from .config import ChannelConfig
from .errors import ChecksumError, SampleFileError, VersionError
from .sampling import SampleSet

MAGIC = b"ATMQ"
VERSION = 1
_crc64 = crcmod.predefined.mkCrcFun("crc-64-we")
_ARRAYS = ("mean_intensity", "centroid_intensity", "cond_sum", "cond_count")


def encode_samples(sample_set: SampleSet, version: int = VERSION) -> bytes:
    config = sample_set.config.canonical_json(indent=None).encode()
    arrays = [np.ascontiguousarray(getattr(sample_set, name), dtype="<f8") for name in _ARRAYS]
    header = {
        "columns": list(sample_set.columns),
        "records": len(sample_set),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in zip(_ARRAYS, arrays)],
        "radii": [float(r) for r in sample_set.radii],
        "offsets": [float(d) for d in sample_set.offsets],
        "pilot": sample_set.pilot,
        "layout": "little-endian float64, row-per-record",
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    parts = [
        MAGIC,
        struct.pack("<H", version),
        struct.pack("<I", len(config)),
        config,
        struct.pack("<I", len(head)),
        head,
        np.ascontiguousarray(sample_set.records, dtype="<f8").tobytes(),
    ]
    parts.extend(a.tobytes() for a in arrays)
    body = b"".join(parts)
    return body + struct.pack("<Q", _crc64(body))


def save_samples(sample_set: SampleSet, path) -> Path:
    path = Path(path)
    data = encode_samples(sample_set)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)
    return path


def decode_samples(data: bytes) -> SampleSet:
    if len(data) < 6 or data[:4] != MAGIC:
        raise SampleFileError("not a sample file (bad magic)")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise VersionError(f"sample file version {version} is not supported (reader handles {VERSION})")
    if len(data) < 14:
        raise ChecksumError("sample file is truncated")
    body, trailer = data[:-8], data[-8:]
    if struct.unpack("<Q", trailer)[0] != _crc64(body):
        raise ChecksumError("sample file checksum mismatch (corrupt or truncated)")
    pos = 6
    (n,) = struct.unpack_from("<I", body, pos)
    pos += 4
    config = ChannelConfig.from_dict(json.loads(body[pos : pos + n]))
    pos += n
    (n,) = struct.unpack_from("<I", body, pos)
    pos += 4
    header = json.loads(body[pos : pos + n])
    pos += n
    ncol = len(header["columns"])
    nrec = header["records"]
    records, pos = _read(body, pos, (nrec, ncol))
    arrays = {}
    for entry in header["arrays"]:
        arrays[entry["name"]], pos = _read(body, pos, tuple(entry["shape"]))
    if pos != len(body):
        raise SampleFileError("unexpected trailing bytes in sample file")
    return SampleSet(
        config=config,
        radii=np.asarray(header["radii"], dtype=float),
        offsets=np.asarray(header["offsets"], dtype=float),
        records=records,
        pilot=header["pilot"],
        columns=header["columns"],
        **arrays,
    )


def _read(buf, pos, shape):
    count = int(np.prod(shape, dtype=np.int64))
    end = pos + 8 * count
    if end > len(buf):
        raise SampleFileError("sample file shorter than its header declares")
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).astype(np.float64).reshape(shape)
    return arr, end


def load_samples(path) -> SampleSet:
    return decode_samples(Path(path).read_bytes())


def export_csv(sample_set: SampleSet, path) -> Path:
    """One row per record, columns as stored (floats in ``repr`` form)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(sample_set.columns)
        for row in sample_set.records:
            w.writerow([str(int(row[0]))] + [repr(float(v)) for v in row[1:]])
    return path
