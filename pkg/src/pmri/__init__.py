"""pmri: parallel-MRI simulation, reconstruction, and trainable pipeline."""

__version__ = "0.1.0"
