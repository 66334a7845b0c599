"""Experiment runners and their registry."""
