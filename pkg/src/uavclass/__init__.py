"""Simulation, learning, and classification of UAV flight dynamics.

Pipeline: simulate labeled trajectories for three vehicle classes, train a
residual tanh network to map (state, class) to state derivatives under a
hybrid data + temporal-smoothness loss, then identify an unknown vehicle by
which class hypothesis best explains its observed derivatives.
"""

__version__ = "0.1.0"
