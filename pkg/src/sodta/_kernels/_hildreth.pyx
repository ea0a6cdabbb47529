# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled cyclic dual row-action sweeps for the projection step.

One sweep visits every constraint row, then every lower bound, then every
upper bound, applying the Hildreth dual update in place. Equality rows carry
an unrestricted multiplier (the update is a hyperplane projection); inequality
rows and bounds clip their multiplier at zero. The pure-Python fallback in
``fallback.py`` mirrors this loop operation for operation; keep the two in
sync (and keep FP contraction off) so results stay bit-identical.
"""

from libc.math cimport fabs


def run_sweeps(double[::1] v,
               long long[::1] indptr, long long[::1] indices,
               double[::1] data, double[::1] rhs,
               unsigned char[::1] is_eq,
               double[::1] inv_sqnorm, double[::1] norm,
               double[::1] row_dual, double[::1] lower_dual,
               long long[::1] upper_idx, double[::1] upper_val,
               double[::1] upper_dual,
               long long max_sweeps, double tol):
    """Run up to ``max_sweeps`` full sweeps; stop early once the largest
    primal violation and the largest induced point movement both drop to
    ``tol``. Returns (converged, sweeps_used, max_violation, max_step)."""
    cdef Py_ssize_t m = rhs.shape[0]
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t nu = upper_idx.shape[0]
    cdef Py_ssize_t sweep, r, p, j, q
    cdef long long used = 0
    cdef bint converged = False
    cdef double dot, resid, cand, delta, viol, step
    cdef double max_viol = 0.0
    cdef double max_step = 0.0

    with nogil:
        for sweep in range(max_sweeps):
            max_viol = 0.0
            max_step = 0.0
            for r in range(m):
                dot = 0.0
                for p in range(indptr[r], indptr[r + 1]):
                    dot += data[p] * v[indices[p]]
                resid = dot - rhs[r]
                if is_eq[r]:
                    viol = fabs(resid)
                    delta = resid * inv_sqnorm[r]
                    row_dual[r] = row_dual[r] + delta
                else:
                    viol = resid if resid > 0.0 else 0.0
                    cand = row_dual[r] + resid * inv_sqnorm[r]
                    if cand < 0.0:
                        cand = 0.0
                    delta = cand - row_dual[r]
                    row_dual[r] = cand
                if viol > max_viol:
                    max_viol = viol
                if delta != 0.0:
                    for p in range(indptr[r], indptr[r + 1]):
                        v[indices[p]] = v[indices[p]] - delta * data[p]
                    step = fabs(delta) * norm[r]
                    if step > max_step:
                        max_step = step
            for j in range(n):
                resid = -v[j]
                cand = lower_dual[j] + resid
                if cand < 0.0:
                    cand = 0.0
                delta = cand - lower_dual[j]
                lower_dual[j] = cand
                if resid > max_viol:
                    max_viol = resid
                if delta != 0.0:
                    v[j] = v[j] + delta
                    step = fabs(delta)
                    if step > max_step:
                        max_step = step
            for q in range(nu):
                j = upper_idx[q]
                resid = v[j] - upper_val[q]
                cand = upper_dual[q] + resid
                if cand < 0.0:
                    cand = 0.0
                delta = cand - upper_dual[q]
                upper_dual[q] = cand
                if resid > max_viol:
                    max_viol = resid
                if delta != 0.0:
                    v[j] = v[j] - delta
                    step = fabs(delta)
                    if step > max_step:
                        max_step = step
            used = sweep + 1
            if max_viol <= tol and max_step <= tol:
                converged = True
                break
    return bool(converged), int(used), float(max_viol), float(max_step)
