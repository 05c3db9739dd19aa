"""Equilibria of small games: Lemke-Howson, logit QRE singularities and cusp catastrophes."""

__version__ = "0.1.0"
