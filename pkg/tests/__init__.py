"""Test package for the BELM sampler lab."""
