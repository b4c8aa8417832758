"""Multiple periodic solutions of the relativistic Lorentz force equation
via a regularised (Moreau envelope) action and proximal-point search."""

__version__ = "0.1.0"
