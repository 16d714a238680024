"""Per-service access control: open, user-, service- and application-level."""
from dataclasses import dataclass, field

MODES = ("open", "user", "service", "application")


@dataclass(frozen=True)
class AuthPolicy:
    mode: str = "open"
    allowed_users: frozenset = field(default_factory=frozenset)
    allowed_apps: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown auth mode {self.mode!r}")
        object.__setattr__(self, "allowed_users", frozenset(self.allowed_users))
        object.__setattr__(self, "allowed_apps", frozenset(self.allowed_apps))
        if self.mode == "user" and not self.allowed_users:
            raise ValueError("user mode needs at least one allowed user")
        if self.mode == "service" and not self.allowed_users:
            raise ValueError("service mode needs a per-service user list")
        if self.mode == "application" and not self.allowed_apps:
            raise ValueError("application mode needs at least one allowed app")

    @classmethod
    def from_dict(cls, data):
        if isinstance(data, str):
            return cls(data)
        return cls(data.get("mode", "open"), frozenset(data.get("allowed_users", ())),
                   frozenset(data.get("allowed_apps", ())))

    def to_dict(self):
        return {"mode": self.mode, "allowed_users": sorted(self.allowed_users),
                "allowed_apps": sorted(self.allowed_apps)}


@dataclass(frozen=True)
class Credentials:
    user_token: str | None = None
    app_token: str | None = None


@dataclass(frozen=True)
class AuthDecision:
    allowed: bool
    reason: str | None = None

    def __bool__(self):
        return self.allowed


ALLOW = AuthDecision(True)


def authorize(policy, credentials):
    """Decide one request. A deny names the check that failed."""
    if policy.mode == "open":
        return ALLOW
    if policy.mode == "application":
        if credentials.app_token is not None and credentials.app_token in policy.allowed_apps:
            return ALLOW
        return AuthDecision(False, "application")
    # user and service modes both check the user token; service mode holds a
    # user list specific to this one service
    if credentials.user_token is not None and credentials.user_token in policy.allowed_users:
        return ALLOW
    return AuthDecision(False, policy.mode)
