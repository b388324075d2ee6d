"""r-adaptive multi-patch isogeometric analysis guided by a point cloud parameterization network."""

__version__ = "0.1.0"
