"""
Binary prompt bank files.

Layout (little-endian):
    magic     4s   b"DPB1"
    version   u16
    modality  u8   0 visual, 1 textual
    flow      u8   0 discard, 1 propagate
    depth     u32
    length    u32
    dim       u32
    crc32     u32  of the payload
    payload   depth*length*dim float64, row-major, layer by layer
"""

import logging
import struct
import zlib
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import BankFormatError
from .bank import FlowPolicy, Modality, PromptBank

logger = logging.getLogger(__name__)

MAGIC = b"DPB1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHBBIIII")

_MODALITIES = [Modality.VISUAL, Modality.TEXTUAL]
_FLOWS = [FlowPolicy.DISCARD, FlowPolicy.PROPAGATE]


def dumps_bank(bank: PromptBank) -> bytes:
    payload = np.concatenate(bank.prompts, axis=0).astype("<f8").tobytes()
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, _MODALITIES.index(bank.modality),
                          _FLOWS.index(bank.flow_policy), bank.depth, bank.length,
                          bank.model_dim, zlib.crc32(payload) & 0xFFFFFFFF)
    return header + payload


def loads_bank(blob: bytes) -> PromptBank:
    """
    Decode a bank produced by dumps_bank.

    Raises:
        BankFormatError: On bad magic, unknown version or codes, size
            mismatch or checksum failure
    """
    if len(blob) < _HEADER.size:
        raise BankFormatError(f"bank file truncated: {len(blob)} bytes")
    magic, version, modality, flow, depth, length, dim, crc = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BankFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise BankFormatError(f"unsupported bank format version {version}")
    if modality >= len(_MODALITIES) or flow >= len(_FLOWS):
        raise BankFormatError(f"unknown modality/flow codes {modality}/{flow}")
    if min(depth, length, dim) < 1:
        raise BankFormatError(f"invalid bank shape {depth}x{length}x{dim}")

    payload = blob[_HEADER.size:]
    expected = depth * length * dim * 8
    if len(payload) != expected:
        raise BankFormatError(f"payload has {len(payload)} bytes, expected {expected}")
    if zlib.crc32(payload) & 0xFFFFFFFF != crc:
        raise BankFormatError("payload checksum mismatch")

    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.isfinite(values).all():
        raise BankFormatError("payload contains non-finite values")
    layers = list(values.reshape(depth, length, dim))
    return PromptBank(_MODALITIES[modality], depth, length, dim, layers, _FLOWS[flow])


def save_bank(bank: PromptBank, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_bank(bank))
    logger.info("Saved %s bank (%dx%dx%d) to %s", bank.modality.value, bank.depth,
                bank.length, bank.model_dim, path)
    return path


def load_bank(path: Union[str, Path]) -> PromptBank:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise BankFormatError(f"cannot read bank file {path}: {e}") from e
    return loads_bank(blob)
