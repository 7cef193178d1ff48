"""Sweep-kernel backend selection.

The compiled Cython kernel is used when present; otherwise the pure-Python
implementation takes over with identical semantics.  Set TNQG_KERNEL=python
to force the fallback (used by the benchmark and the parity tests).
"""

import os

from . import metropolis_py
from .pack import FlatTermPack, build_pack, pack_log_density

try:
    from . import metropolis_cy as _compiled
except ImportError:
    _compiled = None

if _compiled is not None and os.environ.get("TNQG_KERNEL", "") != "python":
    run_chain = _compiled.run_chain
    KERNEL_BACKEND = "cython"
else:
    run_chain = metropolis_py.run_chain
    KERNEL_BACKEND = "python"

run_chain_python = metropolis_py.run_chain
run_chain_compiled = _compiled.run_chain if _compiled is not None else None

__all__ = [
    "FlatTermPack", "KERNEL_BACKEND", "build_pack", "pack_log_density",
    "run_chain", "run_chain_compiled", "run_chain_python",
]
