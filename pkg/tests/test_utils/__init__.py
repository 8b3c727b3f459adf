"""Test suite for configuration and I/O helpers."""
