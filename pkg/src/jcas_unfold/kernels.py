"""Selects the compiled kernels when built, otherwise the numpy fallback.

Set ``JCAS_UNFOLD_PURE=1`` to force the fallback.
"""

import os

from . import _pykernels as python

if os.environ.get("JCAS_UNFOLD_PURE") == "1":
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

active = compiled if compiled is not None else python
BACKEND = active.BACKEND

pgd = active.pgd
unfold_forward = active.unfold_forward
unfold_loss_grad = active.unfold_loss_grad
phase_grid = active.phase_grid
psi = active.psi
