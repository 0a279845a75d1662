"""Hierarchical multi-agent satellite inspection.

Relative-motion dynamics, a barrier-function safety filter, low-level
point-to-point and high-level routing environments, policy inference and a
mission harness with CLI.
"""

__version__ = "0.1.0"
