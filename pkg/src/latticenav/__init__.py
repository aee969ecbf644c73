"""2-D mobile-robot motion planning toolkit.

Three layers: heuristic-guided state-lattice global planning with motion
primitive pruning, sparse-banded soft-constrained local path optimization,
and time-optimal velocity profiling, plus a benchmark harness.
"""

from ._kernels import HAVE_NATIVE, IMPLEMENTATION

__version__ = "0.1.0"
__all__ = ["HAVE_NATIVE", "IMPLEMENTATION", "__version__"]
