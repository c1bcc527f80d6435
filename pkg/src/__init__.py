"""BELM sampler lab source package."""
