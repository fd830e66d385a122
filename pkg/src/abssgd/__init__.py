"""Simulation library for adaptive-batch delayed synchronous SGD on heterogeneous clusters."""

from abssgd.numeric import ContractViolation, RngStream

__all__ = ["ContractViolation", "RngStream"]
__version__ = "0.1.0"
