"""Deflation-preconditioned restarted GMRES for the 3-D Bratu problem."""
