"""Marks the test root so the shared helpers are importable everywhere."""
