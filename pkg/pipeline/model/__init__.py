"""Vision encoder, perceiver resampler and language core."""
