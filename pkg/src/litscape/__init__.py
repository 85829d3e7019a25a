"""Mine research objectives, methods, and datasets from papers and map how they co-occur."""

__version__ = "0.1.0"
