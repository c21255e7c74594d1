"""Error type shared by the plotting pipeline."""


class PlotError(Exception):
    """Raised for unreadable inputs, schema mismatches, or empty selections."""
