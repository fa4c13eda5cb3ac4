"""Solver kernel backend selection.

The compiled extension is preferred when it imported successfully;
the pure-NumPy reference backend is always available.  Setting the
environment variable ``GIGAN_PURE_PYTHON=1`` before import forces the
reference backend (useful for debugging and for benchmarking one
against the other).
"""

from __future__ import annotations

import os

from . import solvers_py

_FORCED_PURE = os.environ.get("GIGAN_PURE_PYTHON", "").strip() == "1"

if _FORCED_PURE:
    _impl = solvers_py
    BACKEND = "pure"
else:
    try:
        from . import _solvers as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = solvers_py
        BACKEND = "pure"

F_KL = solvers_py.F_KL
F_JS = solvers_py.F_JS

div_value = _impl.div_value
div_grad = _impl.div_grad
project_rows_simplex = _impl.project_rows_simplex
coupling_minimize = _impl.coupling_minimize
mcshane = _impl.mcshane
solve_nu_js = _impl.solve_nu_js
dual_value_grad = _impl.dual_value_grad
lip_dual_ascent = _impl.lip_dual_ascent
potential_dual_ascent = _impl.potential_dual_ascent


def backend_module(name: str):
    """Return a specific backend module by name ("pure" or "compiled").

    Raises ``ImportError`` if the compiled extension is unavailable.
    """
    if name == "pure":
        return solvers_py
    if name == "compiled":
        from . import _solvers  # type: ignore[attr-defined]

        return _solvers
    raise ValueError(f"unknown backend {name!r}")


__all__ = [
    "BACKEND",
    "F_JS",
    "F_KL",
    "backend_module",
    "coupling_minimize",
    "div_grad",
    "div_value",
    "dual_value_grad",
    "lip_dual_ascent",
    "mcshane",
    "potential_dual_ascent",
    "project_rows_simplex",
    "solve_nu_js",
]
