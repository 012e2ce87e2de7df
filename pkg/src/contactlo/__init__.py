"""Numerical Lax-Oleinik semiflows for contact-type Lagrangians on the torus,
with finite-scale topological entropy estimates."""

__version__ = "0.1.0"
