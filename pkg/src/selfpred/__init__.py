"""Representation-condition laboratory: exact oracles, objectives, and agents."""
