"""Stand-in for Time-Series-Library models behind a fit/score interface."""
