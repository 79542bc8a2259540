"""Quadratic-potential GANs with exact discrete oracles and a 2D training harness."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"
