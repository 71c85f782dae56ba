"""radscribe pipeline stages."""
