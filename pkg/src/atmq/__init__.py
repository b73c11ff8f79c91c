"""Monte Carlo simulation and transmittance statistics of turbulent free-space optical channels."""

__version__ = "0.1.0"
