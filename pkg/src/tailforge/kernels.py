"""Kernel dispatch: the Cython extension if it was built, else the numpy fallback.

Set ``TAILFORGE_PURE_PYTHON=1`` before import to force the fallback.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("TAILFORGE_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

herding_order = backend.herding_order
cosine_scores = backend.cosine_scores
batch_topk = backend.batch_topk
render_batch = backend.render_batch
