"""Detection with azimuth estimation: four output representations compared on synthetic data."""

__version__ = "0.1.0"
