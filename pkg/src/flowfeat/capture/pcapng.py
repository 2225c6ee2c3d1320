"""PCAPNG reader: Section Header, Interface Description and Enhanced Packet
blocks. Every other block type is skipped. Timestamps are normalized to
microseconds using each interface's declared resolution (if_tsresol)."""

import struct
import warnings
from typing import BinaryIO, Iterator

from .pcap import CaptureFormatError, TruncatedCaptureWarning

BLOCK_SHB = 0x0A0D0D0A
BLOCK_IDB = 0x00000001
BLOCK_EPB = 0x00000006

_OPT_ENDOFOPT = 0
_OPT_IF_TSRESOL = 9


class _Interface:
    __slots__ = ("link_type", "to_us_num", "to_us_shift", "to_us_div")

    def __init__(self, link_type: int, tsresol: int):
        self.link_type = link_type
        # tsresol MSB clear: units of 10^-N s; set: units of 2^-N s.
        self.to_us_num = 1
        self.to_us_shift = 0
        self.to_us_div = 1
        if tsresol & 0x80:
            self.to_us_num = 1_000_000
            self.to_us_shift = tsresol & 0x7F
        else:
            power = tsresol & 0x7F
            if power <= 6:
                self.to_us_num = 10 ** (6 - power)
            else:
                self.to_us_div = 10 ** (power - 6)

    def to_us(self, units: int) -> int:
        if self.to_us_shift:
            return (units * self.to_us_num) >> self.to_us_shift
        return units * self.to_us_num // self.to_us_div


def _parse_tsresol(options: bytes, byte_order: str) -> int:
    """Walk an options list for if_tsresol; default is 6 (microseconds)."""
    off = 0
    while off + 4 <= len(options):
        code, length = struct.unpack_from(byte_order + "HH", options, off)
        off += 4
        if code == _OPT_ENDOFOPT:
            break
        value = options[off : off + length]
        off += (length + 3) & ~3
        if code == _OPT_IF_TSRESOL and len(value) >= 1:
            return value[0]
    return 6


def read_pcapng(fp: BinaryIO) -> Iterator[tuple[int, int, bytes]]:
    """Yield (ts_us, link_type, frame) from Enhanced Packet blocks."""
    byte_order = None
    interfaces: list[_Interface] = []

    while True:
        head = fp.read(8)
        if not head:
            return
        if len(head) < 8:
            warnings.warn("pcapng block header truncated at EOF", TruncatedCaptureWarning)
            return

        block_type_raw = head[0:4]
        if byte_order is None:
            # File must open with a Section Header Block.
            if block_type_raw != b"\x0a\x0d\x0d\x0a":
                raise CaptureFormatError("pcapng file does not start with a section header")

        if block_type_raw == b"\x0a\x0d\x0d\x0a":
            body_peek = fp.read(4)
            if len(body_peek) < 4:
                warnings.warn("pcapng section header truncated", TruncatedCaptureWarning)
                return
            if body_peek == b"\x1a\x2b\x3c\x4d":
                byte_order = ">"
            elif body_peek == b"\x4d\x3c\x2b\x1a":
                byte_order = "<"
            else:
                raise CaptureFormatError("pcapng bad byte-order magic")
            (total_len,) = struct.unpack(byte_order + "I", head[4:8])
            if total_len < 28 or total_len % 4:
                raise CaptureFormatError("pcapng section header bad length")
            rest = fp.read(total_len - 12)
            if len(rest) < total_len - 12:
                warnings.warn("pcapng section header truncated", TruncatedCaptureWarning)
                return
            interfaces = []  # a new section starts a fresh interface list
            continue

        (block_type,) = struct.unpack(byte_order + "I", block_type_raw)
        (total_len,) = struct.unpack(byte_order + "I", head[4:8])
        if total_len < 12 or total_len % 4:
            warnings.warn("pcapng block with bad length, stopping", TruncatedCaptureWarning)
            return
        body = fp.read(total_len - 12)
        if len(body) < total_len - 12:
            warnings.warn("pcapng block truncated at EOF", TruncatedCaptureWarning)
            return
        fp.read(4)  # trailing block-total-length copy

        if block_type == BLOCK_IDB:
            if len(body) < 8:
                warnings.warn("pcapng interface block too short", TruncatedCaptureWarning)
                continue
            link_type, _reserved, _snaplen = struct.unpack_from(byte_order + "HHI", body)
            tsresol = _parse_tsresol(body[8:], byte_order)
            interfaces.append(_Interface(link_type, tsresol))
        elif block_type == BLOCK_EPB:
            if len(body) < 20:
                warnings.warn("pcapng packet block too short", TruncatedCaptureWarning)
                continue
            iface_id, ts_high, ts_low, cap_len, _orig_len = struct.unpack_from(
                byte_order + "IIIII", body
            )
            if iface_id >= len(interfaces):
                warnings.warn(
                    "pcapng packet references unknown interface, skipped",
                    TruncatedCaptureWarning,
                )
                continue
            data = body[20 : 20 + cap_len]
            iface = interfaces[iface_id]
            ts_us = iface.to_us((ts_high << 32) | ts_low)
            yield ts_us, iface.link_type, data
        # all other block types are skipped
