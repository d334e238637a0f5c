"""
NatPATL - model checking of natural-strategy alternating-time logics over stochastic games
"""

__version__ = "1.0.0"
__description__ = "Model checker for NatPATL and NatPATL* over stochastic concurrent game structures"
