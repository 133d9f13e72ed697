"""Tethered hopping-robot teams hauling a payload on a slope.

Submodules: ``dynamics`` (rigid-body + tether simulation), ``grip``
(microspine surface physics), ``gait`` (hop solver and climbing episodes),
``evo`` (NSGA-II attachment search), ``terrain`` and ``planner``
(heightmap obstacles and three-robot path planning), ``cli``.
"""

__version__ = "0.1.0"
