"""Carbon-aware scheduling of multi-objective neural architecture search.

A trace-driven simulator that splits a GPU pool between energy-cheap
architecture sampling and energy-expensive architecture evaluation under an
hourly carbon-intensity signal, comparing fixed, heuristic, and actor-critic
allocation strategies by hypervolume achieved per gram of CO2.
"""

__version__ = "0.1.0"
