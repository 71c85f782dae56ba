"""Corpus samples, prompts, curation and synthetic generation."""
