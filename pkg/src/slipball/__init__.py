"""Galerkin Navier-Stokes on the ball with Navier slip boundary conditions."""

__version__ = "0.1.0"
