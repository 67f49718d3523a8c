"""
Bid Shading - Enchérir sous sa valeur en enchère au premier prix
"""

__version__ = "0.1.0"
