# Forward tangents carried through a reverse-mode tape
from .dual import Dual, gelu, gelu_prime, gelu_second
from .tape import GradientResult, Node, Tape, backward

__all__ = [
    "backward",
    "Dual",
    "gelu",
    "gelu_prime",
    "gelu_second",
    "GradientResult",
    "Node",
    "Tape",
]
