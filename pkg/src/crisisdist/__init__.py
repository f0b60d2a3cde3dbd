"""Fair rights allocation and crisis-market mechanisms with exact rational arithmetic."""

__version__ = "0.1.0"
