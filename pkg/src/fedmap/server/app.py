"""HTTP/JSON surface of one map server."""
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from ..cells import CellId
from ..errors import (FrameMismatch, NoFingerprintCoverage, NotAuthorized, ServiceNotImplemented,
                      SnapFailed, Unreachable, UnknownNode)
from .auth import Credentials
from .schemas import (Envelope, GeocodeRequest, LocalizeRequest, PortalCostsRequest,
                      PortalMatrixRequest,
                      ReverseGeocodeRequest, RouteRequest, SearchRequest)

_CONTRACT_ERRORS = (Unreachable, SnapFailed, UnknownNode, NoFingerprintCoverage, FrameMismatch,
                    ValueError)


def _endpoint(ref):
    return ref if isinstance(ref, str) else (ref.x, ref.y)


def create_app(service):
    app = FastAPI(title=f"map server {service.config.server_id}")
    app.state.service = service

    @app.exception_handler(NotAuthorized)
    async def _deny(request: Request, exc: NotAuthorized):
        return JSONResponse(status_code=403, content={"reason": exc.reason})

    @app.exception_handler(ServiceNotImplemented)
    async def _not_impl(request: Request, exc: ServiceNotImplemented):
        return JSONResponse(status_code=501, content={"error": "NotImplemented", "detail": str(exc)})

    for exc_type in _CONTRACT_ERRORS:
        @app.exception_handler(exc_type)
        async def _contract(request: Request, exc: Exception):
            return JSONResponse(status_code=422,
                                content={"error": type(exc).__name__, "detail": str(exc)})

    def creds(request):
        h = request.headers
        return Credentials(user_token=h.get("x-of-user"), app_token=h.get("x-of-app"))

    def envelope(result):
        return Envelope(map_id=service.map_id, frame_id=service.frame_id, result=result)

    @app.get("/v1/info")
    async def info():
        return envelope({"server_id": service.config.server_id,
                         "services": sorted(service.config.services),
                         "frame": service.frame_id})

    @app.post("/v1/geocode")
    async def geocode(req: GeocodeRequest, request: Request):
        return envelope(service.geocode(creds(request), req.address))

    @app.post("/v1/reverse_geocode")
    async def reverse_geocode(req: ReverseGeocodeRequest, request: Request):
        return envelope(service.reverse_geocode(creds(request), (req.x, req.y),
                                                req.radius_m))

    @app.post("/v1/search")
    async def search(req: SearchRequest, request: Request):
        return envelope(service.search(creds(request), req.keywords, (req.x, req.y),
                                       req.radius_m, req.frame_id))

    @app.post("/v1/route")
    async def route(req: RouteRequest, request: Request):
        path = service.route(creds(request), _endpoint(req.src), _endpoint(req.dst))
        return envelope(path.to_dict())

    @app.post("/v1/portal_costs")
    async def portal_costs(req: PortalCostsRequest, request: Request):
        costs = service.portal_costs(creds(request), _endpoint(req.entry), req.paths)
        if req.paths:
            result = {p: path.to_dict() for p, path in costs.items()}
        else:
            result = {p: {"cost": cm / 100.0, "cost_cm": cm} for p, cm in costs.items()}
        return envelope(result)

    @app.post("/v1/portal_matrix")
    async def portal_matrix(req: PortalMatrixRequest, request: Request):
        return envelope(service.portal_matrix(creds(request), req.entries))

    @app.get("/v1/portals")
    async def portals(request: Request):
        return envelope(service.portals(creds(request)))

    @app.post("/v1/localize")
    async def localize(req: LocalizeRequest, request: Request):
        return envelope(service.localize(creds(request), req.beacon_rssi).to_dict())

    @app.get("/v1/tile/")
    @app.get("/v1/tile/{token}")
    async def tile(request: Request, token: str = ""):
        try:
            cell = CellId.from_token(token)
        except Exception as exc:
            raise ValueError(str(exc)) from None
        return envelope(service.render_tile(creds(request), cell))

    return app
