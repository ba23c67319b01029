"""Decentralized convoy control: iLQR convoy MPC, a reactive baseline and a lockstep simulator."""

from .dynamics import ControlInput, VehicleParams, VehicleState
from .convoy import ConvoyAgent, ConvoyConfig, NeighborSnapshot
from .base_controller import BaseAgent, BaseConfig

__all__ = [
    "BaseAgent",
    "BaseConfig",
    "ControlInput",
    "ConvoyAgent",
    "ConvoyConfig",
    "NeighborSnapshot",
    "VehicleParams",
    "VehicleState",
]

__version__ = "0.1.0"
