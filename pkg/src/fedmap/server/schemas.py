from typing import Any, Optional, Union

from pydantic import BaseModel, Field


class Point(BaseModel):
    x: float
    y: float


class GeocodeRequest(BaseModel):
    address: str = Field(min_length=1)


class ReverseGeocodeRequest(BaseModel):
    x: float
    y: float
    radius_m: float = Field(gt=0)


class SearchRequest(BaseModel):
    keywords: list[str] = Field(min_length=1)
    x: float
    y: float
    radius_m: float = Field(gt=0)
    frame_id: Optional[str] = None


class RouteRequest(BaseModel):
    src: Union[str, Point]
    dst: Union[str, Point]


class PortalCostsRequest(BaseModel):
    entry: Union[str, Point]
    paths: bool = True


class PortalMatrixRequest(BaseModel):
    entries: list[str] = Field(min_length=1)


class LocalizeRequest(BaseModel):
    beacon_rssi: dict[str, float] = Field(min_length=1)


class Envelope(BaseModel):
    map_id: str
    frame_id: str
    result: Any


class ErrorBody(BaseModel):
    error: str
    detail: str = ""


class DenyBody(BaseModel):
    reason: str
