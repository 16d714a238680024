"""HTTP transport from the client to one map server."""
import httpx

from .. import errors
from ..server.auth import Credentials

DEFAULT_TIMEOUT_S = 2.0
DEFAULT_RETRIES = 1

_REMOTE_KINDS = {
    "Unreachable": errors.Unreachable,
    "SnapFailed": errors.SnapFailed,
    "UnknownNode": errors.UnknownNode,
    "NoFingerprintCoverage": errors.NoFingerprintCoverage,
    "FrameMismatch": errors.FrameMismatch,
}


class ServerClient:
    def __init__(self, endpoint, credentials=None, http=None, timeout=DEFAULT_TIMEOUT_S,
                 retries=DEFAULT_RETRIES):
        self.endpoint = endpoint.rstrip("/")
        self.credentials = credentials or Credentials()
        self.http = http or httpx.Client()
        self.timeout = timeout
        self.retries = retries

    def _headers(self):
        h = {}
        if self.credentials.user_token is not None:
            h["X-OF-User"] = self.credentials.user_token
        if self.credentials.app_token is not None:
            h["X-OF-App"] = self.credentials.app_token
        return h

    def call(self, method, path, body=None):
        """Returns the response envelope dict; raises typed errors."""
        url = self.endpoint + path
        last = None
        for _ in range(self.retries + 1):
            try:
                resp = self.http.request(method, url, json=body, headers=self._headers(),
                                         timeout=self.timeout)
                break
            except httpx.TransportError as exc:
                last = exc
        else:
            raise errors.ServerUnavailable(f"{url}: {last}")
        try:
            payload = resp.json()
        except ValueError:
            raise errors.ServerUnavailable(f"{url}: non-JSON response ({resp.status_code})") from None
        if resp.status_code == 200:
            return payload
        if resp.status_code == 403:
            raise errors.NotAuthorized(payload.get("reason", "denied"))
        if resp.status_code == 501:
            raise errors.ServiceNotImplemented(payload.get("detail", path))
        kind = payload.get("error", "") if isinstance(payload, dict) else ""
        detail = payload.get("detail", "") if isinstance(payload, dict) else str(payload)
        if kind in _REMOTE_KINDS:
            raise _REMOTE_KINDS[kind](detail)
        raise errors.RemoteError(resp.status_code, kind or "error", str(detail))

    def geocode(self, address):
        return self.call("POST", "/v1/geocode", {"address": address})

    def reverse_geocode(self, x, y, radius_m):
        return self.call("POST", "/v1/reverse_geocode", {"x": x, "y": y, "radius_m": radius_m})

    def search(self, keywords, x, y, radius_m, frame_id=None):
        body = {"keywords": list(keywords), "x": x, "y": y, "radius_m": radius_m}
        if frame_id is not None:
            body["frame_id"] = frame_id
        return self.call("POST", "/v1/search", body)

    def route(self, src, dst):
        return self.call("POST", "/v1/route", {"src": _ref(src), "dst": _ref(dst)})

    def portal_costs(self, entry, paths=True):
        return self.call("POST", "/v1/portal_costs", {"entry": _ref(entry), "paths": paths})

    def portal_matrix(self, entries):
        return self.call("POST", "/v1/portal_matrix", {"entries": list(entries)})

    def portals(self):
        return self.call("GET", "/v1/portals")

    def localize(self, beacon_rssi):
        return self.call("POST", "/v1/localize", {"beacon_rssi": dict(beacon_rssi)})

    def tile(self, cell):
        return self.call("GET", f"/v1/tile/{cell.token}")

    def info(self):
        return self.call("GET", "/v1/info")


def _ref(ref):
    if isinstance(ref, str):
        return ref
    x, y = ref
    return {"x": x, "y": y}
