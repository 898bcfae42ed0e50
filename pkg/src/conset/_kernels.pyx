# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: batched polynomial evaluation and RK4 propagation.

Mirrors the pure-numpy implementations in ``conset._kernels_py``; the
dispatcher in ``conset.kernels`` picks this module when it imported
successfully and the CONSET_PURE environment variable is not set.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

AVAILABLE = True


cdef inline double _eval_one(const double* x, const long* exps, int nv,
                             double coef) noexcept nogil:
    cdef double v = coef
    cdef int j, k
    cdef long e
    for j in range(nv):
        e = exps[j]
        for k in range(e):
            v *= x[j]
    return v


cdef void _eval_vec(const double* x, const long* exps, const double* coefs,
                    const long* offsets, int n_polys, int nv,
                    double* out) noexcept nogil:
    """Evaluate n_polys polynomials (terms concatenated) at a single point."""
    cdef int p
    cdef long t
    for p in range(n_polys):
        out[p] = 0.0
        for t in range(offsets[p], offsets[p + 1]):
            out[p] += _eval_one(x, exps + t * nv, nv, coefs[t])


def eval_many(cnp.ndarray[long, ndim=2] exps,
              cnp.ndarray[double, ndim=1] coefs,
              cnp.ndarray[long, ndim=1] offsets,
              cnp.ndarray[double, ndim=2] points):
    """Evaluate a packed family of polynomials at many points.

    Returns an (N, n_polys) array.
    """
    cdef int n_polys = offsets.shape[0] - 1
    cdef int nv = exps.shape[1]
    cdef Py_ssize_t n = points.shape[0]
    if points.shape[1] != nv:
        raise ValueError("point arity mismatch")
    out = np.empty((n, n_polys))
    cdef double[:, ::1] out_v = out
    cdef const double[:, ::1] pts = np.ascontiguousarray(points)
    cdef const long[:, ::1] ex = np.ascontiguousarray(exps)
    cdef const double[::1] cf = np.ascontiguousarray(coefs)
    cdef const long[::1] off = np.ascontiguousarray(offsets)
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            _eval_vec(&pts[i, 0], &ex[0, 0], &cf[0], &off[0], n_polys, nv,
                      &out_v[i, 0])
    return out


def rk4_propagate(cnp.ndarray[long, ndim=2] f_exps,
                  cnp.ndarray[double, ndim=1] f_coefs,
                  cnp.ndarray[long, ndim=1] f_offsets,
                  cnp.ndarray[double, ndim=2] x0,
                  double t0, double t1, long n_steps,
                  cnp.ndarray[long, ndim=2] g_exps,
                  cnp.ndarray[double, ndim=1] g_coefs,
                  cnp.ndarray[long, ndim=1] g_offsets,
                  double tol, double diverge_norm):
    """Fixed-step RK4 over [t0, t1] for a batch of initial states.

    The vector field polynomials live over (t, x); the check polynomials
    over x only and are required to be >= -tol at every grid node
    (including the first and last).  Returns (final_states, ok_mask,
    min_margin).  States whose sup-norm exceeds diverge_norm are marked
    failed with margin -inf.
    """
    cdef Py_ssize_t n = x0.shape[0]
    cdef int nx = x0.shape[1]
    cdef int nv = nx + 1
    cdef int ng = g_offsets.shape[0] - 1
    cdef double h = (t1 - t0) / n_steps

    out = np.array(x0, dtype=float, copy=True, order="C")
    ok = np.ones(n, dtype=np.uint8)
    margin = np.full(n, np.inf)

    cdef double[:, ::1] st = out
    cdef cnp.uint8_t[::1] ok_v = ok
    cdef double[::1] mg = margin
    cdef const long[:, ::1] fe = np.ascontiguousarray(f_exps)
    cdef const double[::1] fc = np.ascontiguousarray(f_coefs)
    cdef const long[::1] fo = np.ascontiguousarray(f_offsets)
    cdef const long[:, ::1] ge = np.ascontiguousarray(g_exps)
    cdef const double[::1] gc = np.ascontiguousarray(g_coefs)
    cdef const long[::1] go = np.ascontiguousarray(g_offsets)

    cdef double[::1] z = np.empty(nv)
    cdef double[::1] k1 = np.empty(nx)
    cdef double[::1] k2 = np.empty(nx)
    cdef double[::1] k3 = np.empty(nx)
    cdef double[::1] k4 = np.empty(nx)
    cdef double[::1] gv = np.empty(max(ng, 1))

    cdef Py_ssize_t i
    cdef long step
    cdef int j, g
    cdef double t, bad

    with nogil:
        for i in range(n):
            # initial node check
            z[0] = t0
            for j in range(nx):
                z[j + 1] = st[i, j]
            if ng:
                _eval_vec(&z[1], &ge[0, 0], &gc[0], &go[0], ng, nx, &gv[0])
                for g in range(ng):
                    if gv[g] < mg[i]:
                        mg[i] = gv[g]
            t = t0
            for step in range(n_steps):
                z[0] = t
                for j in range(nx):
                    z[j + 1] = st[i, j]
                _eval_vec(&z[0], &fe[0, 0], &fc[0], &fo[0], nx, nv, &k1[0])
                z[0] = t + 0.5 * h
                for j in range(nx):
                    z[j + 1] = st[i, j] + 0.5 * h * k1[j]
                _eval_vec(&z[0], &fe[0, 0], &fc[0], &fo[0], nx, nv, &k2[0])
                for j in range(nx):
                    z[j + 1] = st[i, j] + 0.5 * h * k2[j]
                _eval_vec(&z[0], &fe[0, 0], &fc[0], &fo[0], nx, nv, &k3[0])
                z[0] = t + h
                for j in range(nx):
                    z[j + 1] = st[i, j] + h * k3[j]
                _eval_vec(&z[0], &fe[0, 0], &fc[0], &fo[0], nx, nv, &k4[0])
                bad = 0.0
                for j in range(nx):
                    st[i, j] += h / 6.0 * (k1[j] + 2 * k2[j] + 2 * k3[j] + k4[j])
                    if st[i, j] > diverge_norm or st[i, j] < -diverge_norm:
                        bad = 1.0
                t = t0 + (step + 1) * h
                if bad:
                    ok_v[i] = 0
                    mg[i] = -1e308
                    break
                if ng:
                    for j in range(nx):
                        z[j] = st[i, j]
                    _eval_vec(&z[0], &ge[0, 0], &gc[0], &go[0], ng, nx, &gv[0])
                    for g in range(ng):
                        if gv[g] < mg[i]:
                            mg[i] = gv[g]
            if ok_v[i] and ng and mg[i] < -tol:
                ok_v[i] = 0
    return out, ok.astype(bool), margin
