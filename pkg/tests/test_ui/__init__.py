"""Tests for the command line and the results dashboard."""
