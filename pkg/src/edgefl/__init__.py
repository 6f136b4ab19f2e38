"""Deterministic federated-learning simulator with a graph-autoencoder
poisoning attack and an edge IoT eavesdropping channel model.

Model parameters are plain 1-D float64 numpy arrays throughout; every
source of randomness is a named :class:`~edgefl.numerics.RngStream` so
identical configs and seeds reproduce identical outputs byte for byte.
"""

__version__ = "0.1.0"
