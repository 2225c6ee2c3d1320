"""Reading PCAP/PCAPNG files into normalized packet records."""

import os
from typing import Iterator

from .decode import decode_packet
from .packet import (
    PROTO_ICMP,
    PROTO_ICMP6,
    PROTO_IGMP,
    PROTO_TCP,
    PROTO_UDP,
    TCP_ACK,
    TCP_FIN,
    TCP_PSH,
    TCP_RST,
    TCP_SYN,
    DecodedPacket,
    LinkType,
    Skip,
)
from .pcap import CaptureFormatError, TruncatedCaptureWarning, read_pcap, sniff_magic
from .pcapng import read_pcapng

__all__ = [
    "CaptureFormatError",
    "DecodedPacket",
    "LinkType",
    "Skip",
    "TruncatedCaptureWarning",
    "decode_packet",
    "open_capture",
    "decode_capture",
    "PROTO_ICMP",
    "PROTO_ICMP6",
    "PROTO_IGMP",
    "PROTO_TCP",
    "PROTO_UDP",
    "TCP_ACK",
    "TCP_FIN",
    "TCP_PSH",
    "TCP_RST",
    "TCP_SYN",
]


def open_capture(path: str | os.PathLike) -> Iterator[tuple[int, int, bytes]]:
    """Stream (ts_us, link_type, frame) records from a PCAP or PCAPNG file.

    The format is sniffed from the magic bytes. Raises CaptureFormatError for
    unreadable or unrecognized files; a file truncated mid-record yields its
    complete records and a TruncatedCaptureWarning.
    """
    with open(path, "rb") as fp:
        magic = sniff_magic(fp.read(4))
        fp.seek(0)
        if magic == "pcap":
            yield from read_pcap(fp)
        elif magic == "pcapng":
            yield from read_pcapng(fp)
        else:
            raise CaptureFormatError(f"{path}: not a PCAP or PCAPNG file")


def decode_capture(path: str | os.PathLike) -> Iterator[DecodedPacket | Skip]:
    """Stream decode results for every frame in a capture file."""
    for ts_us, link_type, frame in open_capture(path):
        yield decode_packet(frame, link_type, ts_us)
