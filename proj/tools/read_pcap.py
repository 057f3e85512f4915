#!/usr/bin/env python3
"""Independent classic-pcap reader (stdlib only).

Parses a capture file written by the listener agents without sharing any code
with the writer: validates the global header, walks every record, decodes the
raw IPv4+TCP packets, verifies both IP and TCP checksums, and prints one line
per flow plus totals.  Used by the test suite as a third-party cross-check
that the captures are well-formed.
"""

import struct
import sys


def ones_complement_sum(data: bytes) -> int:
    if len(data) % 2:
        data += b"\x00"
    total = sum(struct.unpack("!%dH" % (len(data) // 2), data))
    while total > 0xFFFF:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def ip_checksum_ok(header: bytes) -> bool:
    return ones_complement_sum(header) == 0xFFFF


def tcp_checksum_ok(src: bytes, dst: bytes, segment: bytes) -> bool:
    pseudo = src + dst + struct.pack("!BBH", 0, 6, len(segment))
    return ones_complement_sum(pseudo + segment) == 0xFFFF


def fmt_ip(raw: bytes) -> str:
    return ".".join(str(b) for b in raw)


def main() -> int:
    if len(sys.argv) != 2:
        print("usage: read_pcap.py <file.pcap>", file=sys.stderr)
        return 2
    with open(sys.argv[1], "rb") as fh:
        blob = fh.read()

    if len(blob) < 24:
        print("error: truncated global header", file=sys.stderr)
        return 1
    magic = struct.unpack("<I", blob[:4])[0]
    if magic == 0xA1B2C3D4:
        endian = "<"
    elif magic == 0xD4C3B2A1:
        endian = ">"
    else:
        print("error: bad magic 0x%08x" % magic, file=sys.stderr)
        return 1
    vmaj, vmin, _tz, _sig, snaplen, linktype = struct.unpack(endian + "HHiIII", blob[4:24])
    print("magic=%08x version=%d.%d snaplen=%d linktype=%d" % (magic, vmaj, vmin, snaplen, linktype))
    if linktype != 101:
        print("error: expected raw-IP linktype 101", file=sys.stderr)
        return 1

    offset = 24
    packets = 0
    checksum_errors = 0
    last_ts = None
    flows = {}  # (src, sport, dst, dport) canonical -> stats
    order = []
    while offset < len(blob):
        if offset + 16 > len(blob):
            print("error: truncated record header at %d" % offset, file=sys.stderr)
            return 1
        ts_sec, ts_usec, incl, orig = struct.unpack(endian + "IIII", blob[offset : offset + 16])
        offset += 16
        if incl != orig or offset + incl > len(blob):
            print("error: truncated packet at %d" % offset, file=sys.stderr)
            return 1
        pkt = blob[offset : offset + incl]
        offset += incl
        packets += 1
        ts = ts_sec * 1_000_000 + ts_usec
        if last_ts is not None and ts < last_ts:
            print("error: timestamps went backwards", file=sys.stderr)
            return 1
        last_ts = ts

        if len(pkt) < 20 or pkt[0] >> 4 != 4:
            print("error: packet %d is not IPv4" % packets, file=sys.stderr)
            return 1
        ihl = (pkt[0] & 0xF) * 4
        total_len = struct.unpack("!H", pkt[2:4])[0]
        proto = pkt[9]
        if total_len != len(pkt) or proto != 6 or len(pkt) < ihl + 20:
            print("error: packet %d has a bad IP header" % packets, file=sys.stderr)
            return 1
        if not ip_checksum_ok(pkt[:ihl]):
            checksum_errors += 1
        src, dst = pkt[12:16], pkt[16:20]
        seg = pkt[ihl:]
        if not tcp_checksum_ok(src, dst, seg):
            checksum_errors += 1
        sport, dport = struct.unpack("!HH", seg[:4])
        doff = (seg[12] >> 4) * 4
        flags = seg[13]
        payload = len(seg) - doff

        key = (fmt_ip(src), sport, fmt_ip(dst), dport)
        rkey = (key[2], key[3], key[0], key[1])
        if key in flows:
            st, fwd = flows[key], True
        elif rkey in flows:
            st, fwd = flows[rkey], False
        else:
            st = {"syn": 0, "synack": 0, "fin": 0, "rst": 0, "client_bytes": 0, "server_bytes": 0}
            flows[key] = st
            order.append(key)
            fwd = True
        if flags & 0x02:
            st["synack" if flags & 0x10 else "syn"] += 1
        if flags & 0x01:
            st["fin"] += 1
        if flags & 0x04:
            st["rst"] += 1
        st["client_bytes" if fwd else "server_bytes"] += payload

    print("packets=%d" % packets)
    print("flows=%d" % len(flows))
    for key in order:
        st = flows[key]
        print(
            "flow src=%s:%d dst=%s:%d syn=%d synack=%d fin=%d rst=%d client_bytes=%d server_bytes=%d"
            % (key[0], key[1], key[2], key[3], st["syn"], st["synack"], st["fin"], st["rst"],
               st["client_bytes"], st["server_bytes"])
        )
    print("checksum_errors=%d" % checksum_errors)
    return 0 if checksum_errors == 0 else 1


if __name__ == "__main__":
    sys.exit(main())
