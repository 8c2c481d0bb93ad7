"""trajaudit: information-theoretic auditing of recorded multi-agent trajectories."""

__version__ = "0.1.0"
