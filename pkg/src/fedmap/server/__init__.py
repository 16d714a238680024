"""One provider's map server: services, auth, and the HTTP app."""
from .auth import AuthDecision, AuthPolicy, Credentials, authorize
from .graph import Path, RouteGraph
from .service import MapService, PoseEstimate, ServerConfig

__all__ = ["AuthDecision", "AuthPolicy", "Credentials", "authorize", "Path", "RouteGraph",
           "MapService", "PoseEstimate", "ServerConfig"]
