"""Tests for the grid, energy, solver, dynamics and biharmonic modules."""
