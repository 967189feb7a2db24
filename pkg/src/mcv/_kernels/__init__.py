"""Hot kernels for tree fitting and prediction.

Two interchangeable implementations exist: a Cython extension (``_core``)
and a NumPy fallback (``_fallback``). Both accumulate in identical order, so
models built through either path are bit-identical. Selection happens once
at import; set ``MCV_PURE_PYTHON=1`` to force the fallback (the benchmark
uses this to compare the two).
"""

import os

from . import _fallback

try:
    from . import _core
except ImportError:
    _core = None

HAVE_COMPILED = _core is not None

if HAVE_COMPILED and not os.environ.get("MCV_PURE_PYTHON"):
    impl = _core
    BACKEND = "compiled"
else:
    impl = _fallback
    BACKEND = "fallback"

hist_grad_hess = impl.hist_grad_hess
predict_tree = impl.predict_tree
