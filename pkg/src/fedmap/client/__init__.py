"""Client-side federation across discovered map servers."""
from .federation import (FederationClient, GeocodeCandidate, LocalizationResult, LocalPrior,
                         SearchResult, StitchedPath, TileComposition, merge_search)
from .transport import ServerClient

__all__ = ["FederationClient", "GeocodeCandidate", "LocalizationResult", "LocalPrior",
           "SearchResult", "StitchedPath", "TileComposition", "ServerClient", "merge_search"]
