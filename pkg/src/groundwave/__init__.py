"""groundwave - ground-reflection blockage recovery for 60 GHz links."""

__version__ = "0.1.0"
