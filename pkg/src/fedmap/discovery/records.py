from dataclasses import dataclass, field

SERVICES = ("geocode", "reverse_geocode", "search", "route", "localize", "tile")
RECORD_VERSION = "of1"


def _check_token(value, what):
    if not value or any(ch in value for ch in ";= \t\r\n\""):
        raise ValueError(f"{what} {value!r} must be non-empty and free of ';', '=', quotes and whitespace")


@dataclass(frozen=True)
class MapServerRecord:
    server_id: str
    endpoint: str
    services: frozenset
    localization_techs: frozenset = field(default_factory=frozenset)
    priority: int = 10
    ttl_s: int = 300

    def __post_init__(self):
        _check_token(self.server_id, "server_id")
        _check_token(self.endpoint, "endpoint")
        services = frozenset(self.services)
        if not services:
            raise ValueError("a record must advertise at least one service")
        unknown = services - set(SERVICES)
        if unknown:
            raise ValueError(f"unknown services: {sorted(unknown)}")
        techs = frozenset(self.localization_techs)
        for t in techs:
            if not t or any(ch in t for ch in ";=, \t\"") :
                raise ValueError(f"bad localization tech {t!r}")
        if int(self.ttl_s) < 0:
            raise ValueError("ttl_s must be >= 0")
        object.__setattr__(self, "services", services)
        object.__setattr__(self, "localization_techs", techs)
        object.__setattr__(self, "priority", int(self.priority))
        object.__setattr__(self, "ttl_s", int(self.ttl_s))

    def to_text(self):
        """Canonical single-string form; also the TXT RDATA and zone-file payload."""
        return ";".join([
            f"v={RECORD_VERSION}",
            f"id={self.server_id}",
            f"ep={self.endpoint}",
            "svc=" + ",".join(sorted(self.services)),
            "loc=" + ",".join(sorted(self.localization_techs)),
            f"pri={self.priority}",
        ])

    @classmethod
    def from_text(cls, text, ttl_s):
        fields = {}
        for part in text.split(";"):
            key, sep, value = part.partition("=")
            if not sep or key in fields:
                raise ValueError(f"malformed record text {text!r}")
            fields[key] = value
        if fields.get("v") != RECORD_VERSION:
            raise ValueError(f"unsupported record version in {text!r}")
        if set(fields) != {"v", "id", "ep", "svc", "loc", "pri"}:
            raise ValueError(f"record text has wrong keys: {text!r}")
        svc = frozenset(s for s in fields["svc"].split(",") if s)
        loc = frozenset(s for s in fields["loc"].split(",") if s)
        return cls(fields["id"], fields["ep"], svc, loc, int(fields["pri"]), ttl_s)

    def offers(self, service):
        return service in self.services


def rank_key(record):
    return (record.priority, record.server_id)
