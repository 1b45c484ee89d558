"""Transversal convolution of densities on polyhedral surfaces."""
