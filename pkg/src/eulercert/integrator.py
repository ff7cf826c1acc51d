"""Vectorized Dormand-Prince 5(4) integration of many autonomous ODEs at once,
with boundary events located by bisection on dense RK steps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVE, HIT, TIMEOUT, STAGNATION, FAILED, OUTSIDE = range(6)
STATUS_NAMES = {ACTIVE: "active", HIT: "hit", TIMEOUT: "timeout", STAGNATION: "stagnation",
                FAILED: "failed", OUTSIDE: "outside"}

_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def dopri_step(rhs, y, h, k1):
    """One DP5(4) step.  Returns (y_new, error estimate, k7 = f(y_new))."""
    h = h[:, None]
    ks = [k1]
    for i in range(1, 7):
        acc = y.copy()
        for j, a in enumerate(_A[i]):
            if a:
                acc += (h * a) * ks[j]
        ks.append(rhs(acc))
    y_new = y + h * sum(b * k for b, k in zip(_B5, ks) if b)
    err = h * sum(e * k for e, k in zip(_E, ks) if e)
    return y_new, err, ks[6]


@dataclass
class BatchResult:
    status: np.ndarray
    curve: np.ndarray
    time: np.ndarray
    state: np.ndarray
    n_steps: np.ndarray
    paths: list | None = None


def integrate_batch(rhs, y0, t_max: float, *, tol: float = 1e-9, events=None, event_grads=None,
                    err_dims: int = 2, h_max: float = 0.25, h_min: float = 1e-13,
                    max_steps: int = 200000, record: bool = False, time_tol: float = 1e-12,
                    stagnation: float = 1e-12, start_tol: float = 1e-9) -> BatchResult:
    """Integrate y' = rhs(y) for every row of y0 until an event, t_max or failure.

    ``events(x)`` returns (m, c) level-set values of the first two state
    components, positive outside the domain.  Error control is on the first
    ``err_dims`` components, measured per unit time.
    """
    y0 = np.atleast_2d(np.asarray(y0, dtype=float))
    n, d = y0.shape
    Y = y0.copy()
    t = np.zeros(n)
    status = np.full(n, ACTIVE, dtype=np.int8)
    curve = np.full(n, -1, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    paths = [[(0.0, y0[i, 0], y0[i, 1])] for i in range(n)] if record else None

    K1 = rhs(Y) if n else np.zeros((0, d))
    if events is not None and n:
        e0 = events(Y[:, :2])
        out = e0.max(axis=1) > start_tol
        status[out] = OUTSIDE
        if event_grads is not None:
            g = event_grads(Y[:, :2])
            rate = np.einsum("ncj,nj->nc", g, K1[:, :2])
            leaving = (e0 >= -start_tol) & (rate > 0)
            lv = leaving.any(axis=1) & ~out
            if np.any(lv):
                status[lv] = HIT
                score = np.where(leaving, e0, -np.inf)
                curve[lv] = np.argmax(score[lv], axis=1)
        E = e0.max(axis=1)
    else:
        E = np.full(n, -np.inf)
    speed0 = np.linalg.norm(K1[:, :2], axis=1)
    stag = (speed0 < stagnation) & (status == ACTIVE)
    status[stag] = STAGNATION
    if t_max <= 0:
        status[status == ACTIVE] = TIMEOUT

    scale0 = np.maximum(speed0, 1e-12)
    h = np.minimum(h_max, 0.05 * (1.0 + np.linalg.norm(Y[:, :2], axis=1)) / scale0)
    h = np.minimum(h, max(t_max, 0.0))

    it = 0
    while True:
        idx = np.flatnonzero(status == ACTIVE)
        if len(idx) == 0:
            break
        it += 1
        if it > max_steps:
            status[idx] = FAILED
            break
        y = Y[idx]
        hh = np.minimum(h[idx], t_max - t[idx])
        y_new, err, k7 = dopri_step(rhs, y, hh, K1[idx])
        sc = tol * (1.0 + np.maximum(np.abs(y[:, :err_dims]), np.abs(y_new[:, :err_dims])))
        ratio = np.max(np.abs(err[:, :err_dims]) / sc, axis=1) / hh
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(ratio)
        ratio = np.where(finite, ratio, np.inf)
        accept = ratio <= 1.0
        with np.errstate(divide="ignore"):
            fac = np.where(ratio > 0, 0.9 * ratio ** -0.2, 5.0)
        h_new = hh * np.clip(fac, 0.2, 5.0)
        h_new = np.minimum(h_new, h_max)

        if events is not None:
            e_new = events(y_new[:, :2])
            emax_new = e_new.max(axis=1)
            e_old = E[idx]
            # started on the boundary and left again within one step: shrink
            bounce = accept & (e_old >= 0) & (emax_new >= 0)
            if np.any(bounce):
                accept = accept & ~bounce
                h_new = np.where(bounce, 0.25 * hh, h_new)
            crossed = accept & (emax_new >= 0) & (e_old < 0)
        else:
            e_new = None
            crossed = np.zeros(len(idx), dtype=bool)

        rej = ~accept
        if np.any(rej):
            ri = idx[rej]
            h[ri] = h_new[rej]
            under = h_new[rej] < h_min
            status[ri[under]] = FAILED

        if np.any(crossed):
            ci = idx[crossed]
            lo = np.zeros(len(ci))
            hi = np.ones(len(ci))
            f_lo = E[ci].copy()
            f_hi = emax_new[crossed].copy()
            side = np.zeros(len(ci), dtype=np.int8)
            yc, hc, kc = y[crossed], hh[crossed], K1[ci]
            y_hi = y_new[crossed]
            # Illinois regula falsi on the step fraction, bracket [lo, hi] kept
            for _ in range(100):
                live = hc * (hi - lo) > time_tol
                if not np.any(live):
                    break
                den = f_hi - f_lo
                mid = np.where(den > 0, lo - f_lo * (hi - lo) / np.where(den > 0, den, 1.0), 0.5 * (lo + hi))
                mid = np.clip(mid, lo + 1e-3 * (hi - lo), hi - 1e-3 * (hi - lo))
                ym, _, _ = dopri_step(rhs, yc[live], (mid * hc)[live], kc[live])
                em = np.full(len(ci), np.nan)
                em[live] = events(ym[:, :2]).max(axis=1)
                ymf = np.zeros_like(y_hi)
                ymf[live] = ym
                up = live & (em >= 0)
                dn = live & (em < 0)
                # exact hit of the level set: collapse the bracket
                hit0 = live & (np.abs(em) <= 1e-15)
                hi = np.where(up, mid, hi)
                f_hi = np.where(up, em, f_hi)
                y_hi = np.where(up[:, None], ymf, y_hi)
                lo = np.where(dn, mid, lo)
                f_lo = np.where(dn, em, f_lo)
                f_lo = np.where(up & (side == 1), 0.5 * f_lo, f_lo)
                f_hi = np.where(dn & (side == -1), 0.5 * f_hi, f_hi)
                side = np.where(up, 1, np.where(dn, -1, side)).astype(np.int8)
                lo = np.where(hit0 & up, hi, lo)
            t[ci] = t[ci] + hi * hc
            Y[ci] = y_hi
            status[ci] = HIT
            curve[ci] = np.argmax(events(y_hi[:, :2]), axis=1)
            steps[ci] += 1
            if record:
                for k, i in enumerate(ci):
                    paths[i].append((t[i], y_hi[k, 0], y_hi[k, 1]))

        ok = accept & ~crossed
        if np.any(ok):
            oi = idx[ok]
            spd_old = np.linalg.norm(K1[oi][:, :2], axis=1)
            t[oi] = t[oi] + hh[ok]
            Y[oi] = y_new[ok]
            K1[oi] = k7[ok]
            if e_new is not None:
                E[oi] = emax_new[ok]
            h[oi] = h_new[ok]
            steps[oi] += 1
            if record:
                for i in oi:
                    paths[i].append((t[i], Y[i, 0], Y[i, 1]))
            done = t[oi] >= t_max * (1 - 1e-15)
            status[oi[done]] = TIMEOUT
            st = (~done) & (spd_old < stagnation) & (np.linalg.norm(k7[ok][:, :2], axis=1) < stagnation)
            status[oi[st]] = STAGNATION
    return BatchResult(status, curve, t, Y, steps, paths)
