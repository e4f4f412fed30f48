"""seqcal - sequential calibration and parallel performance modeling."""

__version__ = "0.1.0"
