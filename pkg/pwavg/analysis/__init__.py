"""Averaged function, Brouwer degree and periodic-orbit shooting."""
