"""Benchmark records and runner."""
