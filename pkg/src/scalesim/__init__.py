"""Deterministic discrete-event simulator of an autoscaled container cluster.

Two interchangeable control systems drive the same simulated cluster: a
three-tier hierarchical controller (strategic policy, joint pod/node
planning with demand forecasting, lockstep execution) and a reactive
HPA-plus-cluster-autoscaler baseline.
"""

__version__ = "0.1.0"
