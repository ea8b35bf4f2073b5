"""Mode-switching teleoperation simulator and learners."""
__version__ = "0.1.0"
