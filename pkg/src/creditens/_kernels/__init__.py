"""Kernel backend selection.

The compiled Cython extension (_core) is preferred when importable; the
pure-numpy module (_fallback) implements the identical interface. Override
with CREDITENS_BACKEND=compiled|python (default: auto).
"""

import os

_CHOICE = os.environ.get("CREDITENS_BACKEND", "auto")
if _CHOICE not in {"auto", "compiled", "python"}:
    raise ImportError(f"CREDITENS_BACKEND must be auto|compiled|python, got {_CHOICE!r}")

backend = None
if _CHOICE in ("auto", "compiled"):
    try:
        from . import _core as backend  # type: ignore[attr-defined]
        BACKEND_NAME = "compiled"
    except ImportError:
        if _CHOICE == "compiled":
            raise
        backend = None
if backend is None:
    from . import _fallback as backend
    BACKEND_NAME = "python"

conditional_moments = backend.conditional_moments
cond_m1 = backend.cond_m1
find_u0_grid = backend.find_u0_grid
mc_losses = backend.mc_losses
mixture_pdf = backend.mixture_pdf
mixture_cdf = backend.mixture_cdf
mixture_sf = backend.mixture_sf
mixture_mass = backend.mixture_mass


def available_backends():
    """Names of importable backends ('python' is always available)."""
    names = []
    try:
        from . import _core  # noqa: F401
        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return names


def get_backend(name):
    """Return a backend module by name ('compiled' or 'python')."""
    if name == "compiled":
        from . import _core
        return _core
    if name == "python":
        from . import _fallback
        return _fallback
    raise ValueError(f"unknown backend {name!r}")
