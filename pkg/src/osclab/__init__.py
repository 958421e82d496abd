"""osclab: oscillation, Lipschitz/RBMO seminorms and Calderon-Zygmund
operators on weighted point clouds."""

__version__ = "0.1.0"
