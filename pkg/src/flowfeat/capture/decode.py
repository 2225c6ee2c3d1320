"""Frame decoding: link layer -> IP -> transport payload.

Decoding is total: any byte string yields a DecodedPacket or a Skip with a
reason, never an exception. Non-first IP fragments are skipped (no
reassembly), matching how the supported datasets behave in practice.
"""

import socket
import struct

from .packet import (
    SKIP_FRAGMENT,
    SKIP_LINKTYPE,
    SKIP_MALFORMED,
    SKIP_NON_IP,
    DecodedPacket,
    LinkType,
    Skip,
)

_ETH_IPV4 = 0x0800
_ETH_IPV6 = 0x86DD
_VLAN_TAGS = (0x8100, 0x88A8, 0x9100)

# IPv6 extension headers that use the (next, hdr_ext_len) layout.
_V6_EXTENSIONS = {0, 43, 60, 135, 139, 140}
_V6_FRAGMENT = 44
_V6_AH = 51

_TCP_HDR = struct.Struct("!HHII")
_UDP_HDR = struct.Struct("!HHHH")


def decode_packet(raw: bytes, link_type: int, ts_us: int) -> DecodedPacket | Skip:
    """Decode one captured frame into a DecodedPacket, or Skip it."""
    if link_type == LinkType.ETHERNET:
        if len(raw) < 14:
            return SKIP_MALFORMED
        ethertype = (raw[12] << 8) | raw[13]
        off = 14
        while ethertype in _VLAN_TAGS:
            if len(raw) < off + 4:
                return SKIP_MALFORMED
            ethertype = (raw[off + 2] << 8) | raw[off + 3]
            off += 4
        if ethertype == _ETH_IPV4:
            return _decode_ipv4(raw, off, link_type, ts_us)
        if ethertype == _ETH_IPV6:
            return _decode_ipv6(raw, off, link_type, ts_us)
        return SKIP_NON_IP
    if link_type == LinkType.RAW_IP:
        if not raw:
            return SKIP_MALFORMED
        version = raw[0] >> 4
        if version == 4:
            return _decode_ipv4(raw, 0, link_type, ts_us)
        if version == 6:
            return _decode_ipv6(raw, 0, link_type, ts_us)
        return SKIP_NON_IP
    if link_type == LinkType.IPV4:
        return _decode_ipv4(raw, 0, link_type, ts_us)
    if link_type == LinkType.IPV6:
        return _decode_ipv6(raw, 0, link_type, ts_us)
    if link_type == LinkType.LINUX_SLL:
        if len(raw) < 16:
            return SKIP_MALFORMED
        ethertype = (raw[14] << 8) | raw[15]
        if ethertype == _ETH_IPV4:
            return _decode_ipv4(raw, 16, link_type, ts_us)
        if ethertype == _ETH_IPV6:
            return _decode_ipv6(raw, 16, link_type, ts_us)
        return SKIP_NON_IP
    if link_type == LinkType.LINUX_SLL2:
        if len(raw) < 20:
            return SKIP_MALFORMED
        ethertype = (raw[0] << 8) | raw[1]
        if ethertype == _ETH_IPV4:
            return _decode_ipv4(raw, 20, link_type, ts_us)
        if ethertype == _ETH_IPV6:
            return _decode_ipv6(raw, 20, link_type, ts_us)
        return SKIP_NON_IP
    return SKIP_LINKTYPE


def _decode_ipv4(raw: bytes, off: int, link_type: int, ts_us: int) -> DecodedPacket | Skip:
    if len(raw) < off + 20:
        return SKIP_MALFORMED
    first = raw[off]
    if first >> 4 != 4:
        return SKIP_MALFORMED
    ihl = (first & 0x0F) * 4
    if ihl < 20 or len(raw) < off + ihl:
        return SKIP_MALFORMED
    total_length = (raw[off + 2] << 8) | raw[off + 3]
    if total_length < ihl:
        return SKIP_MALFORMED
    frag = ((raw[off + 6] << 8) | raw[off + 7]) & 0x1FFF
    if frag:
        return SKIP_FRAGMENT
    protocol = raw[off + 9]
    src_packed = raw[off + 12 : off + 16]
    dst_packed = raw[off + 16 : off + 20]
    # Clip to the declared total length; Ethernet frames may carry padding.
    segment = raw[off + ihl : off + min(total_length, len(raw) - off)]
    return _decode_transport(
        segment,
        ts_us=ts_us,
        link_type=link_type,
        ip_version=4,
        src_packed=src_packed,
        dst_packed=dst_packed,
        src_ip=socket.inet_ntop(socket.AF_INET, src_packed),
        dst_ip=socket.inet_ntop(socket.AF_INET, dst_packed),
        protocol=protocol,
        ip_total_length=total_length,
    )


def _decode_ipv6(raw: bytes, off: int, link_type: int, ts_us: int) -> DecodedPacket | Skip:
    if len(raw) < off + 40:
        return SKIP_MALFORMED
    if raw[off] >> 4 != 6:
        return SKIP_MALFORMED
    payload_length = (raw[off + 4] << 8) | raw[off + 5]
    next_header = raw[off + 6]
    src_packed = raw[off + 8 : off + 24]
    dst_packed = raw[off + 24 : off + 40]
    ip_total_length = 40 + payload_length

    end = off + min(40 + payload_length, len(raw) - off)
    cursor = off + 40
    while True:
        if next_header == _V6_FRAGMENT:
            if cursor + 8 > end:
                return SKIP_MALFORMED
            frag_off = ((raw[cursor + 2] << 8) | raw[cursor + 3]) >> 3
            if frag_off:
                return SKIP_FRAGMENT
            next_header = raw[cursor]
            cursor += 8
        elif next_header in _V6_EXTENSIONS:
            if cursor + 8 > end:
                return SKIP_MALFORMED
            ext_len = (raw[cursor + 1] + 1) * 8
            next_header = raw[cursor]
            cursor += ext_len
            if cursor > end:
                return SKIP_MALFORMED
        elif next_header == _V6_AH:
            if cursor + 8 > end:
                return SKIP_MALFORMED
            ext_len = (raw[cursor + 1] + 2) * 4
            next_header = raw[cursor]
            cursor += ext_len
            if cursor > end:
                return SKIP_MALFORMED
        else:
            break

    return _decode_transport(
        raw[cursor:end],
        ts_us=ts_us,
        link_type=link_type,
        ip_version=6,
        src_packed=src_packed,
        dst_packed=dst_packed,
        src_ip=socket.inet_ntop(socket.AF_INET6, src_packed),
        dst_ip=socket.inet_ntop(socket.AF_INET6, dst_packed),
        protocol=next_header,
        ip_total_length=ip_total_length,
    )


def _decode_transport(
    segment: bytes,
    *,
    ts_us: int,
    link_type: int,
    ip_version: int,
    src_packed: bytes,
    dst_packed: bytes,
    src_ip: str,
    dst_ip: str,
    protocol: int,
    ip_total_length: int,
) -> DecodedPacket | Skip:
    src_port = dst_port = None
    tcp_flags = tcp_window = tcp_seq = None
    payload = segment

    if protocol == 6:
        if len(segment) < 20:
            return SKIP_MALFORMED
        src_port, dst_port, tcp_seq, _ack = _TCP_HDR.unpack_from(segment)
        offset_flags = (segment[12] << 8) | segment[13]
        data_offset = (offset_flags >> 12) * 4
        if data_offset < 20 or data_offset > len(segment):
            return SKIP_MALFORMED
        tcp_flags = offset_flags & 0x1FF
        tcp_window = (segment[14] << 8) | segment[15]
        payload = segment[data_offset:]
    elif protocol == 17:
        if len(segment) < 8:
            return SKIP_MALFORMED
        src_port, dst_port, _ulen, _csum = _UDP_HDR.unpack_from(segment)
        payload = segment[8:]

    return DecodedPacket(
        ts_us=ts_us,
        link_type=link_type,
        ip_version=ip_version,
        src_ip=src_ip,
        dst_ip=dst_ip,
        ip_protocol=protocol,
        ip_total_length=ip_total_length,
        src_port=src_port,
        dst_port=dst_port,
        tcp_flags=tcp_flags,
        tcp_window=tcp_window,
        tcp_seq=tcp_seq,
        payload=payload,
        src_packed=src_packed,
        dst_packed=dst_packed,
    )
