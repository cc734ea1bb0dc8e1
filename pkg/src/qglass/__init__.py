"""Quantum state preparation in bang-bang protocol space."""
