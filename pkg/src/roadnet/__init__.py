"""Road network extraction from map tiles, graph evaluation and county statistics."""

__version__ = "0.1.0"
