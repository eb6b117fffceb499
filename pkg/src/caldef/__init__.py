"""Calibration models, elliptic-orbit certificates and torus deformations."""

from ._kernels import IMPL as KERNEL_IMPL
from .exterior import Endo, Form, FormTuple, Metric

__all__ = ["Form", "FormTuple", "Endo", "Metric", "KERNEL_IMPL"]
__version__ = "0.1.0"
