"""Federated map servers, spatial discovery over DNS-style cell names, and a federation client."""
__version__ = "0.1.0"
