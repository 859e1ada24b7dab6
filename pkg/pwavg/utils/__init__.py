"""Logging, export and numerical helpers."""
