"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is picked at import when it was built; otherwise
the numpy versions are used. ``use_backend`` switches explicitly, which
the benchmark and the parity tests rely on.
"""

from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

__all__ = [
    "BACKEND",
    "available_backends",
    "use_backend",
    "length_diff",
    "affinity_csr",
    "pair_weights",
    "truncated_distance_sums",
]

_active: ModuleType = _ckernels if _ckernels is not None else _pykernels
BACKEND = "compiled" if _ckernels is not None else "python"


def available_backends() -> list[str]:
    return ["compiled", "python"] if _ckernels is not None else ["python"]


def use_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"python"``; returns the previous backend name."""
    global _active, BACKEND
    previous = BACKEND
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not built; run `pip install -e .`")
        _active = _ckernels
    elif name == "python":
        _active = _pykernels
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name
    return previous


def length_diff(pa, qa, pb, qb):
    return _active.length_diff(pa, qa, pb, qb)


def affinity_csr(p, q, sigma_d):
    return _active.affinity_csr(p, q, float(sigma_d))


def truncated_distance_sums(rotations, translations, p, q, sigma_d):
    return _active.truncated_distance_sums(rotations, translations, p, q, float(sigma_d))


def pair_weights(p, q, sigma_d):
    return _active.pair_weights(p, q, float(sigma_d))
