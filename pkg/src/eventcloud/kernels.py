"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy versions
are used. Set ``EVENTCLOUD_KERNELS=numpy`` to force the fallback.
"""

import os

from . import _fallback as fallback

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("EVENTCLOUD_KERNELS", "").lower() != "numpy":
    active = compiled
else:
    active = fallback

BACKEND = active.NAME

fps = active.fps
scan_forward = active.scan_forward
scan_backward = active.scan_backward
scatter_add_rows = active.scatter_add_rows
denoise_mask = active.denoise_mask
bn_train_forward = active.bn_train_forward
bn_train_backward = active.bn_train_backward
