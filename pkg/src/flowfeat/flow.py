"""Bidirectional flow assembly.

Packets are grouped on the canonical 5-tuple (both directions map to one
key). FORWARD is the direction of the first observed packet, so forward =
upload from the flow initiator's point of view. Flows complete on idle
timeout, active timeout, FIN/FIN or RST plus a linger, a per-flow packet
cap, or table flush.
"""

import math
import socket
from dataclasses import dataclass, field
from enum import IntEnum

from .capture.packet import TCP_ACK, TCP_FIN, TCP_RST, TCP_SYN, DecodedPacket


class Direction(IntEnum):
    FORWARD = 1
    BACKWARD = -1


@dataclass(frozen=True, slots=True)
class FlowKey:
    """Direction-invariant 5-tuple; (ip_lo, port_lo) <= (ip_hi, port_hi)
    under packed-address-then-port ordering."""

    ip_lo: str
    ip_hi: str
    port_lo: int
    port_hi: int
    protocol: int


def _packed(pkt: DecodedPacket, which: str) -> bytes:
    raw = pkt.src_packed if which == "src" else pkt.dst_packed
    if raw:
        return raw
    family = socket.AF_INET if pkt.ip_version == 4 else socket.AF_INET6
    return socket.inet_pton(family, pkt.src_ip if which == "src" else pkt.dst_ip)


def canonical_key(pkt: DecodedPacket) -> tuple[FlowKey, bool]:
    """Return the packet's flow key and whether it travels from the low
    canonical endpoint. Portless protocols use port 0 on both sides."""
    sport = pkt.src_port or 0
    dport = pkt.dst_port or 0
    from_lo = (_packed(pkt, "src"), sport) <= (_packed(pkt, "dst"), dport)
    if from_lo:
        key = FlowKey(pkt.src_ip, pkt.dst_ip, sport, dport, pkt.ip_protocol)
    else:
        key = FlowKey(pkt.dst_ip, pkt.src_ip, dport, sport, pkt.ip_protocol)
    return key, from_lo


@dataclass(slots=True)
class PacketRecord:
    """One packet inside a flow, times relative to the flow's first packet."""

    rel_time: float
    direction: Direction
    ip_size: int
    payload_size: int
    payload: bytes
    tcp_window: int | None = None
    tcp_flags: int | None = None


@dataclass(slots=True)
class TcpState:
    """Three-way-handshake observations, in strict SYN / SYN-ACK / ACK order."""

    syn_fwd: bool = False
    synack_bwd: bool = False
    ack_fwd: bool = False

    @property
    def handshake_seen(self) -> bool:
        return self.syn_fwd and self.synack_bwd and self.ack_fwd


@dataclass(slots=True)
class BiFlow:
    """A completed bidirectional flow."""

    key: FlowKey
    initiator: tuple[str, int]
    packets: list[PacketRecord]
    first_ts_us: int
    last_ts_us: int
    tcp_state: TcpState
    source_file: str = ""
    completion_reason: str = "eof"
    dns_payloads: list[tuple[Direction, bytes]] = field(default_factory=list)
    tls_stream_fwd: bytes = b""
    tls_stream_bwd: bytes = b""
    # (packet_index, contiguous_prefix_after) milestones of stream assembly;
    # lets TLS record parsing recover per-record arrival times.
    tls_extents_fwd: list[tuple[int, int]] = field(default_factory=list)
    tls_extents_bwd: list[tuple[int, int]] = field(default_factory=list)

    @property
    def packet_count(self) -> int:
        return len(self.packets)

    @property
    def fwd_packet_count(self) -> int:
        return sum(1 for p in self.packets if p.direction == Direction.FORWARD)

    @property
    def bwd_packet_count(self) -> int:
        return len(self.packets) - self.fwd_packet_count

    @property
    def duration(self) -> float:
        """Seconds between first and last packet; NaN below 2 packets."""
        if len(self.packets) < 2:
            return math.nan
        return (self.last_ts_us - self.first_ts_us) / 1e6

    @property
    def protocol(self) -> int:
        return self.key.protocol

    @property
    def is_tcp(self) -> bool:
        return self.key.protocol == 6

    @property
    def src_ip(self) -> str:
        return self.initiator[0]

    @property
    def src_port(self) -> int:
        return self.initiator[1]

    @property
    def dst_ip(self) -> str:
        if self.initiator == (self.key.ip_lo, self.key.port_lo):
            return self.key.ip_hi
        return self.key.ip_lo

    @property
    def dst_port(self) -> int:
        if self.initiator == (self.key.ip_lo, self.key.port_lo):
            return self.key.port_hi
        return self.key.port_lo


class _StreamBuilder:
    """Reassembles one direction's TCP bytes for TLS record parsing.

    Overlapping retransmissions are deduplicated by sequence number with
    last-writer-wins; only the contiguous prefix from the initial sequence
    number is kept.
    """

    __slots__ = ("isn", "buffer", "intervals", "extents", "limit", "stored")

    def __init__(self, limit: int):
        self.isn: int | None = None
        self.buffer = bytearray()
        self.intervals: list[list[int]] = []  # disjoint, sorted [start, end)
        self.extents: list[tuple[int, int]] = []
        self.limit = limit
        self.stored = 0

    def base(self) -> int | None:
        return None if self.isn is None else (self.isn + 1) & 0xFFFFFFFF

    def add(self, pkt_index: int, seq: int, data: bytes, base: int) -> None:
        if self.stored >= self.limit:
            return
        rel = (seq - base) & 0xFFFFFFFF
        if rel > 0x7FFFFFFF:  # before the stream base; stale or wrapped
            return
        data = data[: max(0, self.limit - rel)]
        if not data:
            return
        end = rel + len(data)
        if end > len(self.buffer):
            self.buffer.extend(b"\x00" * (end - len(self.buffer)))
        self.buffer[rel:end] = data
        self.stored = max(self.stored, end)
        self._merge(rel, end)
        prefix = self._prefix()
        if not self.extents or self.extents[-1][1] != prefix:
            self.extents.append((pkt_index, prefix))

    def _merge(self, start: int, end: int) -> None:
        merged: list[list[int]] = []
        placed = False
        for s, e in self.intervals:
            if e < start or s > end:
                merged.append([s, e])
            else:
                start, end = min(s, start), max(e, end)
        for i, (s, _e) in enumerate(merged):
            if s > start:
                merged.insert(i, [start, end])
                placed = True
                break
        if not placed:
            merged.append([start, end])
        self.intervals = merged

    def _prefix(self) -> int:
        if self.intervals and self.intervals[0][0] == 0:
            return self.intervals[0][1]
        return 0

    def finish(self) -> tuple[bytes, list[tuple[int, int]]]:
        return bytes(self.buffer[: self._prefix()]), self.extents


class _FlowState:
    __slots__ = (
        "key",
        "initiator",
        "initiator_from_lo",
        "packets",
        "first_ts_us",
        "last_ts_us",
        "tcp_state",
        "closed_ts_us",
        "fin_fwd",
        "fin_bwd",
        "dns_payloads",
        "stream_fwd",
        "stream_bwd",
    )

    def __init__(self, key: FlowKey, pkt: DecodedPacket, from_lo: bool, tls_limit: int):
        self.key = key
        self.initiator = (pkt.src_ip, pkt.src_port or 0)
        self.initiator_from_lo = from_lo
        self.packets: list[PacketRecord] = []
        self.first_ts_us = pkt.ts_us
        self.last_ts_us = pkt.ts_us
        self.tcp_state = TcpState()
        self.closed_ts_us: int | None = None
        self.fin_fwd = False
        self.fin_bwd = False
        self.dns_payloads: list[tuple[Direction, bytes]] = []
        self.stream_fwd = _StreamBuilder(tls_limit)
        self.stream_bwd = _StreamBuilder(tls_limit)

    def add(self, pkt: DecodedPacket, from_lo: bool) -> None:
        direction = (
            Direction.FORWARD if from_lo == self.initiator_from_lo else Direction.BACKWARD
        )
        index = len(self.packets)
        self.packets.append(
            PacketRecord(
                rel_time=(pkt.ts_us - self.first_ts_us) / 1e6,
                direction=direction,
                ip_size=pkt.ip_total_length,
                payload_size=len(pkt.payload),
                payload=pkt.payload,
                tcp_window=pkt.tcp_window,
                tcp_flags=pkt.tcp_flags,
            )
        )
        self.last_ts_us = pkt.ts_us

        if pkt.tcp_flags is not None:
            self._track_tcp(pkt, direction, index)
        if pkt.payload and 53 in (pkt.src_port, pkt.dst_port):
            self.dns_payloads.append((direction, pkt.payload))

    def _track_tcp(self, pkt: DecodedPacket, direction: Direction, index: int) -> None:
        flags = pkt.tcp_flags
        st = self.tcp_state
        if direction == Direction.FORWARD:
            if flags & TCP_SYN and not flags & TCP_ACK:
                st.syn_fwd = True
            elif (
                st.syn_fwd
                and st.synack_bwd
                and not st.ack_fwd
                and flags & TCP_ACK
                and not flags & (TCP_SYN | TCP_FIN | TCP_RST)
            ):
                st.ack_fwd = True
            if flags & TCP_FIN:
                self.fin_fwd = True
        else:
            if st.syn_fwd and flags & TCP_SYN and flags & TCP_ACK:
                st.synack_bwd = True
            if flags & TCP_FIN:
                self.fin_bwd = True
        if self.closed_ts_us is None and (
            flags & TCP_RST or (self.fin_fwd and self.fin_bwd)
        ):
            self.closed_ts_us = pkt.ts_us

        stream = self.stream_fwd if direction == Direction.FORWARD else self.stream_bwd
        if flags & TCP_SYN and pkt.tcp_seq is not None:
            stream.isn = pkt.tcp_seq
        if pkt.payload and pkt.tcp_seq is not None:
            base = stream.base()
            if base is None:
                base = pkt.tcp_seq
                stream.isn = (pkt.tcp_seq - 1) & 0xFFFFFFFF
            stream.add(index, pkt.tcp_seq, pkt.payload, base)

    def to_biflow(self, reason: str, source_file: str) -> BiFlow:
        stream_fwd, extents_fwd = self.stream_fwd.finish()
        stream_bwd, extents_bwd = self.stream_bwd.finish()
        return BiFlow(
            key=self.key,
            initiator=self.initiator,
            packets=self.packets,
            first_ts_us=self.first_ts_us,
            last_ts_us=self.last_ts_us,
            tcp_state=self.tcp_state,
            source_file=source_file,
            completion_reason=reason,
            dns_payloads=self.dns_payloads,
            tls_stream_fwd=stream_fwd,
            tls_stream_bwd=stream_bwd,
            tls_extents_fwd=extents_fwd,
            tls_extents_bwd=extents_bwd,
        )


class FlowTable:
    """Single-writer flow table for one capture stream.

    Expiry is evaluated lazily against each arriving packet's timestamp, so
    identical input always produces identical flows in identical order.
    """

    def __init__(
        self,
        *,
        idle_timeout: float = 120.0,
        active_timeout: float = 1800.0,
        packet_cap: int = 100_000,
        fin_linger: float = 5.0,
        max_flows: int = 1_000_000,
        tls_stream_limit: int = 262_144,
        source_file: str = "",
    ):
        self.idle_timeout_us = int(idle_timeout * 1e6)
        self.active_timeout_us = int(active_timeout * 1e6)
        self.packet_cap = packet_cap
        self.fin_linger_us = int(fin_linger * 1e6)
        self.max_flows = max_flows
        self.tls_stream_limit = tls_stream_limit
        self.source_file = source_file
        self._flows: dict[FlowKey, _FlowState] = {}

    def __len__(self) -> int:
        return len(self._flows)

    def ingest(self, pkt: DecodedPacket) -> list[BiFlow]:
        """Add one packet; return any flows this packet completed."""
        completed: list[BiFlow] = []
        key, from_lo = canonical_key(pkt)
        state = self._flows.get(key)

        if state is not None:
            reason = self._expiry_reason(state, pkt.ts_us)
            if reason is not None:
                completed.append(self._complete(key, reason))
                state = None

        if state is None:
            if len(self._flows) >= self.max_flows:
                oldest = min(self._flows, key=lambda k: self._flows[k].last_ts_us)
                completed.append(self._complete(oldest, "evicted"))
            state = _FlowState(key, pkt, from_lo, self.tls_stream_limit)
            self._flows[key] = state

        state.add(pkt, from_lo)
        if len(state.packets) >= self.packet_cap:
            completed.append(self._complete(key, "packet_cap"))
        return completed

    def flush(self) -> list[BiFlow]:
        """Complete every live flow, ordered by first packet time."""
        keys = sorted(self._flows, key=lambda k: self._flows[k].first_ts_us)
        return [self._complete(k, "eof") for k in keys]

    def _expiry_reason(self, state: _FlowState, now_us: int) -> str | None:
        if now_us - state.last_ts_us > self.idle_timeout_us:
            return "idle_timeout"
        if now_us - state.first_ts_us > self.active_timeout_us:
            return "active_timeout"
        if state.closed_ts_us is not None and now_us > state.closed_ts_us + self.fin_linger_us:
            return "closed"
        return None

    def _complete(self, key: FlowKey, reason: str) -> BiFlow:
        return self._flows.pop(key).to_biflow(reason, self.source_file)
