"""Hot loops for the state-vector engine.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
version with the same signature.  The active backend is chosen at import
time from ``QAUCTION_DISABLE_NUMBA`` (any of ``1/true/yes`` forces numpy) and
can be switched at runtime with :func:`set_backend`, which is what the
benchmark and the backend-equivalence tests do.

Operators for a step are packed into one ``(G, dmax, dmax)`` array with
per-group ``dims``/``lefts``/``rights`` so numba sees homogeneous types.  A
group block of dimension ``d`` acting on a state reshaped as
``(left, d, right)`` is the usual ``I_left (x) U (x) I_right`` product.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("QAUCTION_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")


_backend = "numba" if HAS_NUMBA and not _env_disabled() else "numpy"


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not importable")
    previous, _backend = _backend, name
    return previous


# --------------------------------------------------------------------------
# numpy

def _apply_block_np(psi, op, dim, left, right):
    return np.matmul(op, psi.reshape(left, dim, right)).reshape(-1)


def _apply_groups_np(psi, ops, dims, lefts, rights):
    for g in range(dims.shape[0]):
        d = dims[g]
        psi = _apply_block_np(psi, ops[g, :d, :d], d, lefts[g], rights[g])
    return psi


def _phase_np(psi, phases, scale):
    return psi * np.exp(-1j * (scale * phases))


def _search_step_np(psi, adj, fwd, dims, lefts, rights, cost, drive, f, delta):
    psi = _phase_np(psi, cost, f * delta)
    psi = _apply_groups_np(psi, adj, dims, lefts, rights)
    psi = _phase_np(psi, drive, (1.0 - f) * delta)
    return _apply_groups_np(psi, fwd, dims, lefts, rights)


def _search_loop_np(psi, adj, fwd, dims, lefts, rights, cost, drive, steps, delta, norms):
    for s in range(1, steps + 1):
        psi = _search_step_np(psi, adj, fwd, dims, lefts, rights, cost, drive, s / steps, delta)
        norms[s - 1] = math.sqrt(float(np.vdot(psi, psi).real))
    return psi


# --------------------------------------------------------------------------
# numba

if HAS_NUMBA:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _apply_block_nb(psi, op, dim, left, right):
        # completed operators are mostly identity, so gather the nonzero entries
        # once and keep the inner loop on the contiguous right index
        rows = np.empty(dim * dim, dtype=np.int64)
        cols = np.empty(dim * dim, dtype=np.int64)
        vals = np.empty(dim * dim, dtype=np.complex128)
        nnz = 0
        for i in range(dim):
            for j in range(dim):
                if op[i, j] != 0:
                    rows[nnz], cols[nnz], vals[nnz] = i, j, op[i, j]
                    nnz += 1
        out = np.zeros_like(psi)
        stride = dim * right
        for l in range(left):
            base = l * stride
            for k in range(nnz):
                dst = base + rows[k] * right
                src = base + cols[k] * right
                a = vals[k]
                for r in range(right):
                    out[dst + r] += a * psi[src + r]
        return out

    @_jit
    def _apply_groups_nb(psi, ops, dims, lefts, rights):
        for g in range(dims.shape[0]):
            d = dims[g]
            psi = _apply_block_nb(psi, ops[g, :d, :d], d, lefts[g], rights[g])
        return psi

    @_jit
    def _phase_nb(psi, phases, scale):
        out = np.empty_like(psi)
        for x in range(psi.shape[0]):
            t = scale * phases[x]
            out[x] = psi[x] * complex(math.cos(t), -math.sin(t))
        return out

    @_jit
    def _search_step_nb(psi, adj, fwd, dims, lefts, rights, cost, drive, f, delta):
        psi = _phase_nb(psi, cost, f * delta)
        psi = _apply_groups_nb(psi, adj, dims, lefts, rights)
        psi = _phase_nb(psi, drive, (1.0 - f) * delta)
        return _apply_groups_nb(psi, fwd, dims, lefts, rights)

    @_jit
    def _search_loop_nb(psi, adj, fwd, dims, lefts, rights, cost, drive, steps, delta, norms):
        for s in range(1, steps + 1):
            psi = _search_step_nb(psi, adj, fwd, dims, lefts, rights, cost, drive, s / steps, delta)
            acc = 0.0
            for x in range(psi.shape[0]):
                acc += psi[x].real * psi[x].real + psi[x].imag * psi[x].imag
            norms[s - 1] = math.sqrt(acc)
        return psi


# --------------------------------------------------------------------------
# dispatch

def _pick(np_fn, nb_name):
    if _backend == "numba":
        return globals()[nb_name]
    return np_fn


def apply_groups(psi, ops, dims, lefts, rights):
    return _pick(_apply_groups_np, "_apply_groups_nb")(psi, ops, dims, lefts, rights)


def apply_phase(psi, phases, scale=1.0):
    """``psi[x] * exp(-i * scale * phases[x])``."""
    return _pick(_phase_np, "_phase_nb")(psi, phases, float(scale))


def search_step(psi, adj, fwd, dims, lefts, rights, cost, drive, f, delta):
    """One ``U D(f) U^dagger P(f)`` update."""
    fn = _pick(_search_step_np, "_search_step_nb")
    return fn(psi, adj, fwd, dims, lefts, rights, cost, drive, float(f), float(delta))


def search_loop(psi, adj, fwd, dims, lefts, rights, cost, drive, steps, delta):
    """Run ``steps`` updates with static operators; returns ``(psi, norms)``."""
    norms = np.empty(steps, dtype=np.float64)
    fn = _pick(_search_loop_np, "_search_loop_nb")
    psi = fn(psi, adj, fwd, dims, lefts, rights, cost, drive, int(steps), float(delta), norms)
    return psi, norms
