"""Numerical kernels for the hot inner loops.

Two interchangeable backends: a Cython extension (``_ckernels``) and a pure
numpy fallback (``_pykernels``). The compiled backend is preferred when it
imported successfully; set ``MIRO_PURE_PYTHON=1`` to force the fallback.
Both backends produce identical results (same accumulation order), so the
choice only affects speed. ``benchmarks/bench_kernels.py`` compares them.
"""

import os

if os.environ.get("MIRO_PURE_PYTHON"):
    from . import _pykernels as _impl
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        from . import _pykernels as _impl  # type: ignore[no-redef]

BACKEND: str = _impl.BACKEND
segment_sum = _impl.segment_sum
dbscan_labels = _impl.dbscan_labels

__all__ = ["BACKEND", "segment_sum", "dbscan_labels"]
