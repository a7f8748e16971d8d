"""Hot-kernel backend selection.

The compiled Cython extension is preferred; the pure numpy module is the
fallback. BWARE_PURE=1 forces the fallback (useful for benchmarking and
for testing backend parity).
"""

from __future__ import annotations

import os

from . import _pure

if os.environ.get("BWARE_PURE"):
    _impl = _pure
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pure

BACKEND: str = _impl.BACKEND

encode_array = _impl.encode_array
encode_rows = _impl.encode_rows
update_rows = _impl.update_rows
fnv1a64_mod = _impl.fnv1a64_mod
preaggregate = _impl.preaggregate


def available_backends() -> dict:
    """Importable kernel backends keyed by name."""
    backends = {"pure": _pure}
    try:
        from . import _core

        backends["compiled"] = _core
    except ImportError:
        pass
    return backends
