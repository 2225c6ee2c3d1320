"""Normalized packet records produced by the capture decoders."""

from dataclasses import dataclass, field
from enum import IntEnum


class LinkType(IntEnum):
    """Link-layer types we decode. Anything else is skipped."""

    ETHERNET = 1
    RAW_IP = 101        # raw IP, version sniffed from the first nibble
    LINUX_SLL = 113
    IPV4 = 228
    IPV6 = 229
    LINUX_SLL2 = 276


# TCP flag bits (low 9 bits of the offset/flags word, NS included).
TCP_FIN = 0x001
TCP_SYN = 0x002
TCP_RST = 0x004
TCP_PSH = 0x008
TCP_ACK = 0x010
TCP_URG = 0x020
TCP_ECE = 0x040
TCP_CWR = 0x080
TCP_NS = 0x100

PROTO_ICMP = 1
PROTO_IGMP = 2
PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMP6 = 58


@dataclass(slots=True)
class DecodedPacket:
    """One captured packet, decoded down to the transport payload.

    ``ts_us`` is microseconds since the epoch (capture timestamps are
    normalized to microsecond resolution regardless of file format).
    ``payload`` is the transport-layer payload: bytes after the TCP/UDP
    header, clipped to the length the IP header declares. For portless
    protocols it is everything after the IP header.
    """

    ts_us: int
    link_type: int
    ip_version: int
    src_ip: str
    dst_ip: str
    ip_protocol: int
    ip_total_length: int
    src_port: int | None = None
    dst_port: int | None = None
    tcp_flags: int | None = None
    tcp_window: int | None = None
    tcp_seq: int | None = None
    payload: bytes = b""
    # Packed address forms, kept so flow keying does not re-parse strings.
    src_packed: bytes = field(default=b"", repr=False)
    dst_packed: bytes = field(default=b"", repr=False)

    @property
    def has_ports(self) -> bool:
        return self.src_port is not None


@dataclass(slots=True, frozen=True)
class Skip:
    """Decoder verdict for frames we do not turn into packets."""

    reason: str


SKIP_NON_IP = Skip("non-ip")
SKIP_FRAGMENT = Skip("ip-fragment")
SKIP_MALFORMED = Skip("malformed")
SKIP_LINKTYPE = Skip("unsupported-linktype")
