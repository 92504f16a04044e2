"""Early stopping for episodic direct policy search, with a budgeted
benchmarking harness for classic-control tasks."""

__version__ = "0.1.0"
