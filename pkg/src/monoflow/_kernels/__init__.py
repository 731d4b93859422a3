"""Hot numeric kernels: compiled fast path with a numpy fallback.

``fastkern`` is an optional Cython extension built by setup.py.  The numpy
reference implementation in :mod:`monoflow._kernels.ref` is selected when the
extension is unavailable or when ``MONOFLOW_PURE_PYTHON`` is set in the
environment.  Both expose the same two functions; see ``ref`` for the
contract and ``benchmarks/bench_kernels.py`` for a speed comparison.
"""

import os

from . import ref

if os.environ.get("MONOFLOW_PURE_PYTHON"):
    impl = ref
    backend_name = "numpy"
else:
    try:
        from . import fastkern as impl  # type: ignore[attr-defined]

        backend_name = "cython"
    except ImportError:
        impl = ref
        backend_name = "numpy"

mixture_log_values = impl.mixture_log_values
mixture_log_jets = impl.mixture_log_jets

__all__ = ["mixture_log_values", "mixture_log_jets", "backend_name", "ref"]
