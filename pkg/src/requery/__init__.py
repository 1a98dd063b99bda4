"""Re-query evaluation for referring expression comprehension.

Decides when to ask a user again (multimodal re-query), how to merge several
phrasings of the same request (rephrase re-query), and computes the
coverage-curve metrics over score evidence from any comprehension model.
"""

from .data import Benchmark, ExpressionEvidence, Instance, instance_loss, load_benchmark, predict, save_benchmark
from .errors import CapabilityError, InputError, ParseError, RequeryError, ValidationError
from .geometry import Box, iou, loss

__version__ = "0.1.0"

__all__ = [
    "Benchmark", "Box", "CapabilityError", "ExpressionEvidence", "InputError", "Instance", "ParseError",
    "RequeryError", "ValidationError", "instance_loss", "iou", "load_benchmark", "loss", "predict",
    "save_benchmark",
]
