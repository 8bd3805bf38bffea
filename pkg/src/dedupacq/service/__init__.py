"""Manifest service (HTTP server) and its client."""
