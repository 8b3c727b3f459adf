"""Test suite for the experiment controller."""
