"""Monte Carlo estimation of intersection exponents of three-dimensional random walks."""
__version__ = "0.1.0"
