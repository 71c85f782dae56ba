"""Reusable building blocks for radscribe: numerics, volumes, text metrics."""
