"""Pure-Python mirror of the compiled sweep kernel.

Transliterates ``_hildreth.pyx`` statement by statement on Python floats
(IEEE doubles), so both backends produce bit-identical iterates. Roughly two
orders of magnitude slower; see benchmarks/projection_bench.py.
"""

from __future__ import annotations


def run_sweeps(v, indptr, indices, data, rhs, is_eq, inv_sqnorm, norm,
               row_dual, lower_dual, upper_idx, upper_val, upper_dual,
               max_sweeps, tol):
    vv = v.tolist()
    ip = indptr.tolist()
    ix = indices.tolist()
    da = data.tolist()
    rh = rhs.tolist()
    eqf = is_eq.tolist()
    inv2 = inv_sqnorm.tolist()
    nrm = norm.tolist()
    rd = row_dual.tolist()
    ld = lower_dual.tolist()
    ui = upper_idx.tolist()
    uv = upper_val.tolist()
    ud = upper_dual.tolist()
    m = len(rh)
    n = len(vv)
    nu = len(ui)

    used = 0
    converged = False
    max_viol = 0.0
    max_step = 0.0
    for sweep in range(max_sweeps):
        max_viol = 0.0
        max_step = 0.0
        for r in range(m):
            dot = 0.0
            for p in range(ip[r], ip[r + 1]):
                dot += da[p] * vv[ix[p]]
            resid = dot - rh[r]
            if eqf[r]:
                viol = resid if resid > 0.0 else -resid
                delta = resid * inv2[r]
                rd[r] = rd[r] + delta
            else:
                viol = resid if resid > 0.0 else 0.0
                cand = rd[r] + resid * inv2[r]
                if cand < 0.0:
                    cand = 0.0
                delta = cand - rd[r]
                rd[r] = cand
            if viol > max_viol:
                max_viol = viol
            if delta != 0.0:
                for p in range(ip[r], ip[r + 1]):
                    vv[ix[p]] = vv[ix[p]] - delta * da[p]
                step = (delta if delta > 0.0 else -delta) * nrm[r]
                if step > max_step:
                    max_step = step
        for j in range(n):
            resid = -vv[j]
            cand = ld[j] + resid
            if cand < 0.0:
                cand = 0.0
            delta = cand - ld[j]
            ld[j] = cand
            if resid > max_viol:
                max_viol = resid
            if delta != 0.0:
                vv[j] = vv[j] + delta
                step = delta if delta > 0.0 else -delta
                if step > max_step:
                    max_step = step
        for q in range(nu):
            j = ui[q]
            resid = vv[j] - uv[q]
            cand = ud[q] + resid
            if cand < 0.0:
                cand = 0.0
            delta = cand - ud[q]
            ud[q] = cand
            if resid > max_viol:
                max_viol = resid
            if delta != 0.0:
                vv[j] = vv[j] - delta
                step = delta if delta > 0.0 else -delta
                if step > max_step:
                    max_step = step
        used = sweep + 1
        if max_viol <= tol and max_step <= tol:
            converged = True
            break

    v[:] = vv
    row_dual[:] = rd
    lower_dual[:] = ld
    if nu:
        upper_dual[:] = ud
    return bool(converged), int(used), float(max_viol), float(max_step)
