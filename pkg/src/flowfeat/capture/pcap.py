"""Classic libpcap file reader (both byte orders, usec and nsec stamps)."""

import struct
import warnings
from typing import BinaryIO, Iterator

MAGIC_USEC = 0xA1B2C3D4
MAGIC_NSEC = 0xA1B23C4D

_GLOBAL_HEADER_LEN = 24
_RECORD_HEADER_LEN = 16


class CaptureFormatError(ValueError):
    """Raised when a capture file cannot be parsed at all."""


class TruncatedCaptureWarning(UserWarning):
    """Emitted when a file ends mid-record; packets before the cut are kept."""


def sniff_magic(first4: bytes) -> str | None:
    """Classify a file by its first four bytes: 'pcap', 'pcapng' or None."""
    if len(first4) < 4:
        return None
    if first4 == b"\x0a\x0d\x0d\x0a":
        return "pcapng"
    for order in ("<", ">"):
        (magic,) = struct.unpack(order + "I", first4)
        if magic in (MAGIC_USEC, MAGIC_NSEC):
            return "pcap"
    return None


def read_pcap(fp: BinaryIO) -> Iterator[tuple[int, int, bytes]]:
    """Yield (ts_us, link_type, frame) records from a classic pcap stream.

    Frames come out in file order. A record cut off by EOF produces a
    TruncatedCaptureWarning after the complete records have been yielded.
    """
    header = fp.read(_GLOBAL_HEADER_LEN)
    if len(header) < _GLOBAL_HEADER_LEN:
        raise CaptureFormatError("pcap global header truncated")

    byte_order = None
    nanosecond = False
    for order in ("<", ">"):
        (magic,) = struct.unpack_from(order + "I", header)
        if magic == MAGIC_USEC:
            byte_order = order
            break
        if magic == MAGIC_NSEC:
            byte_order = order
            nanosecond = True
            break
    if byte_order is None:
        raise CaptureFormatError("not a pcap file (bad magic)")

    _, _, _, _, _, link_type = struct.unpack_from(byte_order + "HHiIII", header, 4)
    record_hdr = struct.Struct(byte_order + "IIII")

    while True:
        hdr = fp.read(_RECORD_HEADER_LEN)
        if not hdr:
            return
        if len(hdr) < _RECORD_HEADER_LEN:
            warnings.warn("pcap record header truncated at EOF", TruncatedCaptureWarning)
            return
        ts_sec, ts_frac, incl_len, _orig_len = record_hdr.unpack(hdr)
        data = fp.read(incl_len)
        if len(data) < incl_len:
            warnings.warn("pcap record data truncated at EOF", TruncatedCaptureWarning)
            return
        if nanosecond:
            ts_us = ts_sec * 1_000_000 + ts_frac // 1000
        else:
            ts_us = ts_sec * 1_000_000 + ts_frac
        yield ts_us, link_type, data
