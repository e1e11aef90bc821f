"""crbeam: robust transmit-covariance design for simulated MIMO CR networks."""

__version__ = "0.1.0"
