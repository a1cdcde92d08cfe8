"""Decoy-state QKD with modified coherent states: photon statistics, bounds, key rates."""
