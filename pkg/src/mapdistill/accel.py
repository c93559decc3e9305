"""Hot numeric kernels with a numba backend and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when it imports
cleanly unless the environment variable ``MAPDISTILL_NUMBA`` is set to
``0``/``false``/``off``/``no``.  Both implementations are kept importable so
``benchmarks/compare_backends.py`` and the test suite can compare them.

Kernel contracts (shared by both backends):

``row_dists(mat, vec) -> (n,) float64``
    Euclidean distance from each row of ``mat`` to ``vec``.

``eval_guess(dists, pose_dists, min_dists, pose_cache, weights, inv_dtot,
             kind, coeffs, cutoff, alpha, inv_nsol) -> (marginal, deltas)``
    One fused pass over the element set for a single maintained solution:
    accumulates the clustering marginal value of the candidate and the
    ordering-score deltas for every element the candidate moves closer to.
    ``kind``: 0 = no ordering scores, 1 = descriptor, 2 = pose, 3 = combined.
    ``pose_dists``/``pose_cache`` may be zero-length when ``kind`` < 2.

``marginal_only(dists, min_dists, weights, inv_dtot) -> float``
    Same marginal accumulation without ordering-score bookkeeping.

``voxel_hits(qpts, qkeys, rpts, sorted_keys, order, tau2, offsets) -> bool (nq,)``
    For each query point, whether any reference point lies within
    ``sqrt(tau2)``.  ``sorted_keys``/``order`` index the reference cloud's
    packed voxel keys; ``offsets`` are the 27 packed neighbour-cell offsets.

``ray_cast(origins, angles, segs, circles, max_range) -> (P, B) float64``
    Distance to the nearest obstacle hit per pose and beam (inf = no hit).
"""

from __future__ import annotations

import math
import os

import numpy as np

_flag = os.environ.get("MAPDISTILL_NUMBA", "").strip().lower()
_want_numba = _flag not in ("0", "false", "off", "no")

KIND_NONE = 0
KIND_DESC = 1
KIND_POSE = 2
KIND_COMBINED = 3


def _gamma_desc(d, coeffs, cutoff):
    """1 - cap-overlap mutual information, scalar."""
    if d >= cutoff:
        return 1.0
    p = coeffs[0]
    for i in range(1, coeffs.shape[0]):
        p = p * d + coeffs[i]
    if p < 0.0:
        p = 0.0
    elif p > 1.0:
        p = 1.0
    return 1.0 - p


def _gamma_pose(g, alpha):
    """1 - max(0, -log(g/alpha + 0.1)), scalar."""
    arg = g / alpha + 0.1
    v = -math.log(arg)
    if v < 0.0:
        v = 0.0
    return 1.0 - v


def _eval_guess_loops(dists, pose_dists, min_dists, pose_cache, weights,
                      inv_dtot, kind, coeffs, cutoff, alpha, inv_nsol):
    n = dists.shape[0]
    marginal = 0.0
    deltas = np.zeros(n)
    for j in range(n):
        d = dists[j]
        md = min_dists[j]
        if d < md:
            marginal += weights[j] * inv_dtot * (md - d)
            if kind == KIND_NONE:
                continue
            delta = 0.0
            if kind == KIND_DESC or kind == KIND_COMBINED:
                delta += _gamma_desc(d, coeffs, cutoff) - _gamma_desc(md, coeffs, cutoff)
            if kind == KIND_POSE or kind == KIND_COMBINED:
                pn = pose_dists[j]
                po = pose_cache[j]
                if pn < po:
                    delta += _gamma_pose(pn, alpha) - _gamma_pose(po, alpha)
            deltas[j] = delta * inv_nsol
    return marginal, deltas


def _marginal_only_loops(dists, min_dists, weights, inv_dtot):
    n = dists.shape[0]
    marginal = 0.0
    for j in range(n):
        d = dists[j]
        md = min_dists[j]
        if d < md:
            marginal += weights[j] * inv_dtot * (md - d)
    return marginal


def _row_dists_loops(mat, vec):
    n, d = mat.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            diff = mat[i, j] - vec[j]
            acc += diff * diff
        out[i] = math.sqrt(acc)
    return out


def _voxel_hits_loops(qpts, qkeys, rpts, sorted_keys, order, tau2, offsets):
    nq = qpts.shape[0]
    hit = np.zeros(nq, dtype=np.bool_)
    for i in range(nq):
        base = qkeys[i]
        found = False
        for o in range(offsets.shape[0]):
            nk = base + offsets[o]
            lo = np.searchsorted(sorted_keys, nk, side="left")
            hi = np.searchsorted(sorted_keys, nk, side="right")
            for t in range(lo, hi):
                r = order[t]
                dx = qpts[i, 0] - rpts[r, 0]
                dy = qpts[i, 1] - rpts[r, 1]
                dz = qpts[i, 2] - rpts[r, 2]
                if dx * dx + dy * dy + dz * dz <= tau2:
                    found = True
                    break
            if found:
                break
        hit[i] = found
    return hit


def _ray_cast_loops(origins, angles, segs, circles, max_range):
    np_, nb = origins.shape[0], angles.shape[0]
    out = np.full((np_, nb), np.inf)
    for p in range(np_):
        ox = origins[p, 0]
        oy = origins[p, 1]
        for b in range(nb):
            dx = math.cos(angles[b])
            dy = math.sin(angles[b])
            best = np.inf
            for s in range(segs.shape[0]):
                x1, y1, x2, y2 = segs[s, 0], segs[s, 1], segs[s, 2], segs[s, 3]
                sx = x2 - x1
                sy = y2 - y1
                denom = dx * sy - dy * sx
                if denom == 0.0:
                    continue
                qx = x1 - ox
                qy = y1 - oy
                t = (qx * sy - qy * sx) / denom
                u = (qx * dy - qy * dx) / denom
                if t > 1e-9 and 0.0 <= u <= 1.0 and t < best:
                    best = t
            for c in range(circles.shape[0]):
                cx = circles[c, 0] - ox
                cy = circles[c, 1] - oy
                r = circles[c, 2]
                proj = cx * dx + cy * dy
                d2 = cx * cx + cy * cy - proj * proj
                if d2 > r * r:
                    continue
                off = math.sqrt(r * r - d2)
                t = proj - off
                if t <= 1e-9:
                    t = proj + off
                if t > 1e-9 and t < best:
                    best = t
            if best <= max_range:
                out[p, b] = best
    return out


# ---------------------------------------------------------------------------
# numpy (vectorized) backend
# ---------------------------------------------------------------------------

def _clamp01(x):
    return np.clip(x, 0.0, 1.0)


def gamma_desc_np(d, coeffs, cutoff):
    """Vectorized 1 - mutual-information for descriptor gaps."""
    d = np.asarray(d, dtype=float)
    o = np.where(d < cutoff, _clamp01(np.polyval(coeffs, d)), 0.0)
    return 1.0 - o


def gamma_pose_np(g, alpha):
    """Vectorized 1 - max(0, -log(g/alpha + 0.1)) for pose gaps."""
    g = np.asarray(g, dtype=float)
    with np.errstate(divide="ignore"):
        v = -np.log(g / alpha + 0.1)
    return 1.0 - np.maximum(0.0, v)


def _row_dists_numpy(mat, vec):
    diff = mat - vec
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def _eval_guess_numpy(dists, pose_dists, min_dists, pose_cache, weights,
                      inv_dtot, kind, coeffs, cutoff, alpha, inv_nsol):
    mask = dists < min_dists
    marginal = float(inv_dtot * np.dot(weights[mask], (min_dists - dists)[mask]))
    deltas = np.zeros(dists.shape[0])
    if kind == KIND_NONE or not mask.any():
        return marginal, deltas
    acc = np.zeros(int(mask.sum()))
    if kind in (KIND_DESC, KIND_COMBINED):
        acc += gamma_desc_np(dists[mask], coeffs, cutoff) - gamma_desc_np(min_dists[mask], coeffs, cutoff)
    if kind in (KIND_POSE, KIND_COMBINED):
        pn = pose_dists[mask]
        po = pose_cache[mask]
        closer = pn < po
        pose_part = np.zeros_like(acc)
        pose_part[closer] = gamma_pose_np(pn[closer], alpha) - gamma_pose_np(po[closer], alpha)
        acc += pose_part
    deltas[mask] = acc * inv_nsol
    return marginal, deltas


def _marginal_only_numpy(dists, min_dists, weights, inv_dtot):
    mask = dists < min_dists
    return float(inv_dtot * np.dot(weights[mask], (min_dists - dists)[mask]))


def _flat_ranges(starts, lens):
    """Concatenate aranges [starts[i], starts[i]+lens[i]) for lens[i] > 0."""
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    cs = np.cumsum(lens)[:-1]
    if len(cs):
        out[cs] = starts[1:] - (starts[:-1] + lens[:-1] - 1)
    return np.cumsum(out)


def _voxel_hits_numpy(qpts, qkeys, rpts, sorted_keys, order, tau2, offsets):
    hit = np.zeros(qpts.shape[0], dtype=bool)
    for off in offsets:
        todo = np.nonzero(~hit)[0]
        if len(todo) == 0:
            break
        nk = qkeys[todo] + off
        lo = np.searchsorted(sorted_keys, nk, side="left")
        hi = np.searchsorted(sorted_keys, nk, side="right")
        lens = hi - lo
        nz = lens > 0
        if not nz.any():
            continue
        sel = todo[nz]
        flat = _flat_ranges(lo[nz], lens[nz])
        reps = np.repeat(sel, lens[nz])
        ridx = order[flat]
        d2 = np.sum((qpts[reps] - rpts[ridx]) ** 2, axis=1)
        hit[reps[d2 <= tau2]] = True
    return hit


def _ray_cast_numpy(origins, angles, segs, circles, max_range):
    np_, nb = origins.shape[0], angles.shape[0]
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (B, 2)
    out = np.full((np_, nb), np.inf)
    have_segs = segs.shape[0] > 0
    have_circ = circles.shape[0] > 0
    if have_segs:
        sx = (segs[:, 2] - segs[:, 0])[None, :]
        sy = (segs[:, 3] - segs[:, 1])[None, :]
    for p in range(np_):
        best = np.full(nb, np.inf)
        if have_segs:
            qx = (segs[:, 0] - origins[p, 0])[None, :]
            qy = (segs[:, 1] - origins[p, 1])[None, :]
            denom = dirs[:, 0:1] * sy - dirs[:, 1:2] * sx
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (qx * sy - qy * sx) / denom
                u = (qx * dirs[:, 1:2] - qy * dirs[:, 0:1]) / denom
            ok = (denom != 0.0) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
            t = np.where(ok, t, np.inf)
            best = np.minimum(best, t.min(axis=1))
        if have_circ:
            cx = (circles[:, 0] - origins[p, 0])[None, :]
            cy = (circles[:, 1] - origins[p, 1])[None, :]
            r = circles[:, 2][None, :]
            proj = dirs[:, 0:1] * cx + dirs[:, 1:2] * cy
            d2 = cx * cx + cy * cy - proj * proj
            inside = d2 <= r * r
            off = np.sqrt(np.where(inside, r * r - d2, 0.0))
            t1 = proj - off
            t2 = proj + off
            t = np.where(t1 > 1e-9, t1, t2)
            t = np.where(inside & (t > 1e-9), t, np.inf)
            best = np.minimum(best, t.min(axis=1))
        out[p] = np.where(best <= max_range, best, np.inf)
    return out


_NUMPY_IMPL = {
    "row_dists": _row_dists_numpy,
    "eval_guess": _eval_guess_numpy,
    "marginal_only": _marginal_only_numpy,
    "voxel_hits": _voxel_hits_numpy,
    "ray_cast": _ray_cast_numpy,
}

# ---------------------------------------------------------------------------
# numba backend (compiled from the explicit-loop reference implementations)
# ---------------------------------------------------------------------------

_NUMBA_IMPL = None
if _want_numba:
    try:
        from numba import njit

        _gd = njit(cache=True, inline="always")(_gamma_desc)
        _gp = njit(cache=True, inline="always")(_gamma_pose)

        def _specialize(fn, **globals_override):
            src_globals = dict(fn.__globals__)
            src_globals.update(globals_override)
            import types

            clone = types.FunctionType(fn.__code__, src_globals, fn.__name__,
                                       fn.__defaults__, fn.__closure__)
            return njit(cache=True)(clone)

        _NUMBA_IMPL = {
            "row_dists": njit(cache=True)(_row_dists_loops),
            "eval_guess": _specialize(_eval_guess_loops, _gamma_desc=_gd, _gamma_pose=_gp),
            "marginal_only": njit(cache=True)(_marginal_only_loops),
            "voxel_hits": njit(cache=True)(_voxel_hits_loops),
            "ray_cast": njit(cache=True)(_ray_cast_loops),
        }
    except ImportError:
        _NUMBA_IMPL = None

BACKEND = "numba" if _NUMBA_IMPL is not None else "numpy"
_ACTIVE = _NUMBA_IMPL if _NUMBA_IMPL is not None else _NUMPY_IMPL

row_dists = _ACTIVE["row_dists"]
eval_guess = _ACTIVE["eval_guess"]
marginal_only = _ACTIVE["marginal_only"]
voxel_hits = _ACTIVE["voxel_hits"]
ray_cast = _ACTIVE["ray_cast"]


def using_numba() -> bool:
    return BACKEND == "numba"


def get_backend(name: str):
    """Return the named kernel table ('numpy' or 'numba'); None if unavailable."""
    if name == "numpy":
        return _NUMPY_IMPL
    if name == "numba":
        return _NUMBA_IMPL
    raise ValueError(f"unknown backend {name!r}")
