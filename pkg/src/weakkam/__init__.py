"""Numerical weak-KAM toolkit for contact and discounted Hamilton-Jacobi equations on flat tori."""

__version__ = "0.1.0"
