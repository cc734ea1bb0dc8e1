"""Hot-loop kernels with a compiled back end and a pure-Python fallback.

The compiled extension is used when it imports; set ``QGLASS_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active one.
"""
import os

from qglass.kernels import _fallback

if os.environ.get("QGLASS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from qglass.kernels import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "cython" if _impl is not _fallback else "python"

chain_apply = _impl.chain_apply
chain_forward = _impl.chain_forward
chain_backward = _impl.chain_backward
sd_bang_bang = _impl.sd_bang_bang
rl_q_values = _impl.rl_q_values
rl_select = _impl.rl_select
rl_learn = _impl.rl_learn

__all__ = [
    "BACKEND", "chain_apply", "chain_forward", "chain_backward", "sd_bang_bang",
    "rl_q_values", "rl_select", "rl_learn",
]

# scalar helpers shared by both back ends
LEGAL_TOL = _fallback.LEGAL_TOL
GREEDY_TOL = _fallback.GREEDY_TOL
tile_index = _fallback._tile
softmax_sample = _fallback._sample
