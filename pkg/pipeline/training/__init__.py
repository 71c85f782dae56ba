"""Loss weighting and the two-stage trainer."""
