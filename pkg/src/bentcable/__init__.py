"""Spatial-longitudinal bent-cable regression fitted by MCMC."""
