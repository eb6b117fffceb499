"""Kernel selection: compiled extension when available, pure Python otherwise.

Set CALDEF_PURE_PYTHON=1 to force the fallback (used by the benchmark and the
equivalence tests).
"""

import os

if os.environ.get("CALDEF_PURE_PYTHON"):
    from . import _py as impl
else:
    try:
        from . import _cy as impl  # type: ignore[attr-defined]
    except ImportError:
        from . import _py as impl

IMPL = impl.IMPL
merge_sign = impl.merge_sign
wedge_kd = impl.wedge_kd
interior_kd = impl.interior_kd
rho_hat_kd = impl.rho_hat_kd

__all__ = ["IMPL", "merge_sign", "wedge_kd", "interior_kd", "rho_hat_kd", "impl"]
