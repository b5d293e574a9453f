# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Fused C implementations of the LSTM layer kernels.

Same contract as kernels.reference.  The per-step recurrent matmuls go through
BLAS dgemm; the gate nonlinearities and cell updates are single fused loops
that gcc vectorizes through libmvec (the module is compiled with -ffast-math
at compile time only, so importing it does not change the FPU state).
"""

import numpy as np

from libc.math cimport exp, tanh
from scipy.linalg.cython_blas cimport dgemm


cdef inline double _sigmoid(double x) noexcept nogil:
    return 1.0 / (1.0 + exp(-x))


cdef void _gemm_abt(double* a, double* b, double* c,
                    int m, int k, int n, double beta) noexcept nogil:
    """c[m,n] (+)= a[m,k] @ b[n,k]^T for row-major buffers."""
    cdef double one = 1.0
    dgemm("T", "N", &n, &m, &k, &one, b, &k, a, &k, &beta, c, &n)


cdef void _gemm_ab(double* a, double* b, double* c,
                   int m, int k, int n, double beta) noexcept nogil:
    """c[m,n] (+)= a[m,k] @ b[k,n] for row-major buffers."""
    cdef double one = 1.0
    dgemm("N", "N", &n, &m, &k, &one, b, &n, a, &k, &beta, c, &n)


cdef void _gemm_atb(double* a, double* b, double* c,
                    int m, int k, int n, double beta) noexcept nogil:
    """c[k,n] (+)= a[m,k]^T @ b[m,n] for row-major buffers."""
    cdef double one = 1.0
    dgemm("N", "T", &n, &k, &m, &one, b, &n, a, &k, &beta, c, &n)


def lstm_forward(xp_arr, w_h_arr):
    """Run the recurrence over all timesteps; returns (gates, cells, tanhc, hout)."""
    # start from a copy: gates(t) = xp(t) + h(t-1) @ w_h^T accumulates in place
    gates_arr = np.array(xp_arr, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] w_h = np.ascontiguousarray(w_h_arr, dtype=np.float64)
    cdef double[:, :, ::1] gates = gates_arr
    cdef Py_ssize_t t_steps = gates.shape[0]
    cdef Py_ssize_t batch = gates.shape[1]
    cdef Py_ssize_t four_h = gates.shape[2]
    cdef Py_ssize_t h = four_h // 4

    cells_arr = np.empty((t_steps, batch, h), dtype=np.float64)
    tanhc_arr = np.empty((t_steps, batch, h), dtype=np.float64)
    hout_arr = np.empty((t_steps, batch, h), dtype=np.float64)
    czero_arr = np.zeros(h, dtype=np.float64)
    cdef double[:, :, ::1] cells = cells_arr
    cdef double[:, :, ::1] tanhc = tanhc_arr
    cdef double[:, :, ::1] hout = hout_arr
    cdef double[::1] czero = czero_arr

    cdef Py_ssize_t t, b, j
    cdef int mi = <int>batch, ki = <int>h, ni = <int>four_h
    cdef double* g_row
    cdef double* c_row
    cdef double* ct_row
    cdef double* h_row
    cdef double* c_prev_row

    # one transcendental per loop so gcc turns each into libmvec calls
    with nogil:
        for t in range(t_steps):
            if t > 0:
                _gemm_abt(&hout[t - 1, 0, 0], &w_h[0, 0], &gates[t, 0, 0],
                          mi, ki, ni, 1.0)
            for b in range(batch):
                g_row = &gates[t, b, 0]
                c_row = &cells[t, b, 0]
                ct_row = &tanhc[t, b, 0]
                h_row = &hout[t, b, 0]
                c_prev_row = &cells[t - 1, b, 0] if t > 0 else &czero[0]
                for j in range(2 * h):  # input and forget slices are adjacent
                    g_row[j] = _sigmoid(g_row[j])
                for j in range(2 * h, 3 * h):
                    g_row[j] = tanh(g_row[j])
                for j in range(3 * h, 4 * h):
                    g_row[j] = _sigmoid(g_row[j])
                for j in range(h):
                    c_row[j] = g_row[h + j] * c_prev_row[j] + g_row[j] * g_row[2 * h + j]
                for j in range(h):
                    ct_row[j] = tanh(c_row[j])
                for j in range(h):
                    h_row[j] = g_row[3 * h + j] * ct_row[j]
    return gates_arr, cells_arr, tanhc_arr, hout_arr


def lstm_backward(dhout_arr, gates_arr, cells_arr, tanhc_arr, hout_arr, w_h_arr):
    """Backpropagate through time; returns (dxp, dw_h)."""
    cdef double[:, :, ::1] dhout = np.ascontiguousarray(dhout_arr, dtype=np.float64)
    cdef double[:, :, ::1] gates = gates_arr
    cdef double[:, :, ::1] cells = cells_arr
    cdef double[:, :, ::1] tanhc = tanhc_arr
    cdef double[:, :, ::1] hout = hout_arr
    cdef double[:, ::1] w_h = np.ascontiguousarray(w_h_arr, dtype=np.float64)

    cdef Py_ssize_t t_steps = gates.shape[0]
    cdef Py_ssize_t batch = gates.shape[1]
    cdef Py_ssize_t four_h = gates.shape[2]
    cdef Py_ssize_t h = four_h // 4

    dxp_arr = np.empty((t_steps, batch, four_h), dtype=np.float64)
    dw_h_arr = np.zeros((four_h, h), dtype=np.float64)
    dh_arr = np.zeros((batch, h), dtype=np.float64)
    dc_arr = np.zeros((batch, h), dtype=np.float64)
    cdef double[:, :, ::1] dxp = dxp_arr
    cdef double[:, ::1] dw_h = dw_h_arr
    cdef double[:, ::1] dh = dh_arr
    cdef double[:, ::1] dc = dc_arr

    cdef Py_ssize_t t, b, j
    cdef int mi = <int>batch, ki = <int>four_h, ni = <int>h
    cdef double gi, gf, gg, go, ct, dh_t, d_c, d_i, d_f, d_g, d_o, c_old
    cdef double* g_row
    cdef double* dxp_row
    cdef double* c_prev_row

    with nogil:
        for t in range(t_steps - 1, -1, -1):
            for b in range(batch):
                g_row = &gates[t, b, 0]
                dxp_row = &dxp[t, b, 0]
                if t > 0:
                    c_prev_row = &cells[t - 1, b, 0]
                else:
                    c_prev_row = NULL
                for j in range(h):
                    gi = g_row[j]
                    gf = g_row[h + j]
                    gg = g_row[2 * h + j]
                    go = g_row[3 * h + j]
                    ct = tanhc[t, b, j]
                    dh_t = dhout[t, b, j] + dh[b, j]
                    d_o = dh_t * ct
                    d_c = dc[b, j] + dh_t * go * (1.0 - ct * ct)
                    c_old = c_prev_row[j] if c_prev_row != NULL else 0.0
                    d_i = d_c * gg
                    d_f = d_c * c_old
                    d_g = d_c * gi
                    dc[b, j] = d_c * gf
                    dxp_row[j] = d_i * gi * (1.0 - gi)
                    dxp_row[h + j] = d_f * gf * (1.0 - gf)
                    dxp_row[2 * h + j] = d_g * (1.0 - gg * gg)
                    dxp_row[3 * h + j] = d_o * go * (1.0 - go)
            # dh_{t-1} = dxp[t] @ w_h ; dw_h += dxp[t]^T @ h_{t-1}
            _gemm_ab(&dxp[t, 0, 0], &w_h[0, 0], &dh[0, 0], mi, ki, ni, 0.0)
            if t > 0:
                _gemm_atb(&dxp[t, 0, 0], &hout[t - 1, 0, 0], &dw_h[0, 0],
                          mi, ki, ni, 1.0)
    return dxp_arr, dw_h_arr
