"""
Photon blockade simulator - Source Package
Cavity QED photon statistics and synthetic HBT measurements.
"""

__version__ = "1.0.0"
__author__ = "Photon Blockade Simulator Team"
