"""Kernel backend selection.

The hot kernels (codebook assignment, tree split scans) ship twice: a Cython
extension (``biomech._native``) and a numpy fallback (``biomech._kernels_py``).
The extension is picked automatically when importable; ``BIOMECH_BACKEND``
overrides the choice (``auto`` | ``native`` | ``python``).
"""

from __future__ import annotations

import os

from .errors import ConfigError


def _resolve(choice: str):
    if choice not in ("auto", "native", "python"):
        raise ConfigError(f"BIOMECH_BACKEND must be auto|native|python, got {choice!r}")
    if choice in ("auto", "native"):
        try:
            from . import _native

            return _native
        except ImportError:
            if choice == "native":
                raise ConfigError(
                    "BIOMECH_BACKEND=native but the compiled extension is not built; "
                    "run `pip install -e . --no-build-isolation`"
                ) from None
    from . import _kernels_py

    return _kernels_py


_impl = _resolve(os.environ.get("BIOMECH_BACKEND", "auto"))

assign_codes = _impl.assign_codes
best_split = _impl.best_split


def backend_name() -> str:
    return _impl.NAME
