"""Experiment configuration, seeded runs and the invariant verification suite."""
