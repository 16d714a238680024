"""Minimal RFC 1035 wire subset: TXT queries over UDP, answered from a NameRegistry."""
import logging
import random
import socket
import socketserver
import struct
import threading

from ..errors import NameOutsideSuffix, ResolutionFailure
from .records import MapServerRecord

log = logging.getLogger(__name__)

QTYPE_TXT = 16
QCLASS_IN = 1
MAX_UDP = 512

NOERROR, FORMERR, SERVFAIL, NXDOMAIN, NOTIMP, REFUSED = 0, 1, 2, 3, 4, 5

FLAG_QR = 0x8000
FLAG_AA = 0x0400
FLAG_TC = 0x0200
FLAG_RD = 0x0100


class WireError(ValueError):
    pass


def encode_name(name):
    out = bytearray()
    name = name.rstrip(".")
    if name:
        for label in name.split("."):
            raw = label.encode("ascii")
            if not 0 < len(raw) < 64:
                raise WireError(f"bad label length in {name!r}")
            out.append(len(raw))
            out += raw
    out.append(0)
    if len(out) > 255:
        raise WireError("name too long")
    return bytes(out)


def decode_name(buf, offset):
    """Decode a possibly-compressed name; returns (name, offset after the name)."""
    labels = []
    end = None
    jumps = 0
    while True:
        if offset >= len(buf):
            raise WireError("name runs past end of message")
        length = buf[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(buf):
                raise WireError("truncated compression pointer")
            ptr = ((length & 0x3F) << 8) | buf[offset + 1]
            if end is None:
                end = offset + 2
            jumps += 1
            if jumps > 64 or ptr >= len(buf):
                raise WireError("bad compression pointer")
            offset = ptr
            continue
        if length & 0xC0:
            raise WireError("unsupported label type")
        offset += 1
        if length == 0:
            break
        if offset + length > len(buf):
            raise WireError("label runs past end of message")
        try:
            labels.append(buf[offset:offset + length].decode("ascii"))
        except UnicodeDecodeError:
            raise WireError("non-ascii label") from None
        offset += length
    return ".".join(labels), (end if end is not None else offset)


def encode_txt_rdata(text):
    raw = text.encode("utf-8")
    out = bytearray()
    # a character-string holds at most 255 bytes
    chunks = [raw[i:i + 255] for i in range(0, len(raw), 255)] or [b""]
    for chunk in chunks:
        out.append(len(chunk))
        out += chunk
    return bytes(out)


def decode_txt_rdata(rdata):
    parts = []
    i = 0
    while i < len(rdata):
        n = rdata[i]
        if i + 1 + n > len(rdata):
            raise WireError("TXT character-string overruns rdata")
        parts.append(rdata[i + 1:i + 1 + n])
        i += 1 + n
    return b"".join(parts).decode("utf-8")


def build_query(name, qtype=QTYPE_TXT, qid=None, rd=False):
    if qid is None:
        qid = random.randrange(0, 1 << 16)
    flags = FLAG_RD if rd else 0
    header = struct.pack("!HHHHHH", qid, flags, 1, 0, 0, 0)
    return header + encode_name(name) + struct.pack("!HH", qtype, QCLASS_IN)


def parse_message(buf):
    """Parse header, question, and answers. Returns a dict."""
    if len(buf) < 12:
        raise WireError("message shorter than header")
    qid, flags, qd, an, ns, ar = struct.unpack("!HHHHHH", buf[:12])
    off = 12
    questions = []
    for _ in range(qd):
        name, off = decode_name(buf, off)
        if off + 4 > len(buf):
            raise WireError("truncated question")
        qtype, qclass = struct.unpack("!HH", buf[off:off + 4])
        off += 4
        questions.append((name, qtype, qclass))
    answers = []
    for _ in range(an):
        name, off = decode_name(buf, off)
        if off + 10 > len(buf):
            raise WireError("truncated resource record")
        rtype, rclass, ttl, rdlen = struct.unpack("!HHIH", buf[off:off + 10])
        off += 10
        if off + rdlen > len(buf):
            raise WireError("truncated rdata")
        answers.append((name, rtype, rclass, ttl, buf[off:off + rdlen]))
        off += rdlen
    return {"id": qid, "flags": flags, "rcode": flags & 0xF, "opcode": (flags >> 11) & 0xF,
            "counts": (qd, an, ns, ar), "questions": questions, "answers": answers}


def _response(qid, req_flags, rcode, question=None, answers=(), tc=False):
    flags = FLAG_QR | FLAG_AA | (req_flags & FLAG_RD) | (req_flags & 0x7800) | rcode
    if tc:
        flags |= FLAG_TC
    qd = 1 if question is not None else 0
    header = struct.pack("!HHHHHH", qid, flags, qd, len(answers), 0, 0)
    body = b""
    if question is not None:
        qname_wire, qtype, qclass = question
        body = qname_wire + struct.pack("!HH", qtype, qclass)
    return header + body + b"".join(answers)


def answer_query(registry, data):
    """Build the response datagram for one query datagram, or None to drop it."""
    if len(data) < 12:
        return None
    qid, flags, qd, _an, _ns, _ar = struct.unpack("!HHHHHH", data[:12])
    if flags & FLAG_QR:
        return None
    opcode = (flags >> 11) & 0xF
    if qd != 1:
        return _response(qid, flags, FORMERR)
    try:
        qname, off = decode_name(data, 12)
        if off + 4 > len(data):
            raise WireError("truncated question")
        qtype, qclass = struct.unpack("!HH", data[off:off + 4])
    except WireError:
        return _response(qid, flags, FORMERR)
    question = (data[12:off], qtype, qclass)
    if opcode != 0 or qclass != QCLASS_IN or qtype != QTYPE_TXT:
        return _response(qid, flags, NOTIMP, question)
    try:
        records = registry.lookup(qname)
    except NameOutsideSuffix:
        return _response(qid, flags, REFUSED, question)
    if not records:
        return _response(qid, flags, NXDOMAIN, question)

    header_len = 12 + len(question[0]) + 4
    answers = []
    size = header_len
    truncated = False
    for rec in records:
        rdata = encode_txt_rdata(rec.to_text())
        # owner name compressed to the question name at offset 12
        rr = struct.pack("!HHHIH", 0xC00C, QTYPE_TXT, QCLASS_IN, rec.ttl_s, len(rdata)) + rdata
        if size + len(rr) > MAX_UDP:
            truncated = True
            break
        answers.append(rr)
        size += len(rr)
    return _response(qid, flags, NOERROR, question, answers, tc=truncated)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        data, sock = self.request
        try:
            reply = answer_query(self.server.registry, data)
        except Exception:  # never let one datagram kill the frontend
            log.exception("failed to answer DNS query")
            reply = None
        if reply is not None:
            sock.sendto(reply, self.client_address)


class DnsFrontend(socketserver.ThreadingMixIn, socketserver.UDPServer):
    """UDP frontend over a NameRegistry. Use as a context manager or call start()/stop()."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, registry, host="127.0.0.1", port=0):
        super().__init__((host, port), _Handler)
        self.registry = registry
        self._thread = None

    @property
    def address(self):
        return self.server_address[:2]

    def start(self):
        self._thread = threading.Thread(target=self.serve_forever, args=(0.05,),
                                        name="dns-frontend", daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def serve_dns(registry, host="127.0.0.1", port=0):
    return DnsFrontend(registry, host, port).start()


def resolve_via_dns(name, address, timeout=2.0, retries=1):
    """Query `name` TXT at address (host, port). Returns list of MapServerRecord.

    NXDOMAIN yields an empty list; transport failure raises ResolutionFailure.
    """
    host, port = address
    last_error = None
    for _ in range(retries + 1):
        qid = random.randrange(0, 1 << 16)
        query = build_query(name, QTYPE_TXT, qid)
        with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
            sock.settimeout(timeout)
            try:
                sock.sendto(query, (host, port))
                while True:
                    data, _ = sock.recvfrom(4096)
                    try:
                        msg = parse_message(data)
                    except WireError as exc:
                        last_error = exc
                        continue
                    if msg["id"] == qid and msg["flags"] & FLAG_QR:
                        break
            except OSError as exc:
                last_error = exc
                continue
        rcode = msg["rcode"]
        if rcode == NXDOMAIN:
            return []
        if rcode != NOERROR:
            raise ResolutionFailure(f"DNS query for {name!r} failed with rcode {rcode}")
        if msg["flags"] & FLAG_TC:
            # UDP only, no TCP retry: callers get the records that fit
            log.warning("truncated DNS answer for %s; using %d records", name, len(msg["answers"]))
        records = []
        for _owner, rtype, _rclass, ttl, rdata in msg["answers"]:
            if rtype != QTYPE_TXT:
                continue
            records.append(MapServerRecord.from_text(decode_txt_rdata(rdata), ttl))
        return records
    raise ResolutionFailure(f"no DNS answer for {name!r} from {host}:{port}: {last_error}")
