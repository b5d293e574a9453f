"""Pure-numpy LSTM layer kernels (the fallback backend).

Both backends share one contract.  Shapes are time-major:

    xp    [T, B, 4H]  input pre-activations x_t @ W_x.T + b, gate order i,f,g,o
    w_h   [4H, H]     recurrent weights
    gates [T, B, 4H]  activated gate values
    cells [T, B, H]   cell states c_t
    tanhc [T, B, H]   tanh(c_t)
    hout  [T, B, H]   hidden states h_t

Initial h and c are zero.  Pad steps are ordinary steps whose downstream
gradient is zero, so no masking happens here.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def lstm_forward(xp: np.ndarray, w_h: np.ndarray):
    """Run the recurrence over all timesteps; returns (gates, cells, tanhc, hout)."""
    t_steps, batch, four_h = xp.shape
    h = four_h // 4
    gates = np.empty_like(xp)
    cells = np.empty((t_steps, batch, h), dtype=xp.dtype)
    tanhc = np.empty_like(cells)
    hout = np.empty_like(cells)
    h_prev = np.zeros((batch, h), dtype=xp.dtype)
    c_prev = np.zeros((batch, h), dtype=xp.dtype)
    for t in range(t_steps):
        pre = xp[t] + h_prev @ w_h.T
        g_t = gates[t]
        g_t[:, :2 * h] = expit(pre[:, :2 * h])       # input, forget
        g_t[:, 2 * h:3 * h] = np.tanh(pre[:, 2 * h:3 * h])  # candidate
        g_t[:, 3 * h:] = expit(pre[:, 3 * h:])       # output
        cells[t] = g_t[:, h:2 * h] * c_prev + g_t[:, :h] * g_t[:, 2 * h:3 * h]
        np.tanh(cells[t], out=tanhc[t])
        hout[t] = g_t[:, 3 * h:] * tanhc[t]
        h_prev = hout[t]
        c_prev = cells[t]
    return gates, cells, tanhc, hout


def lstm_backward(dhout: np.ndarray, gates: np.ndarray, cells: np.ndarray,
                  tanhc: np.ndarray, hout: np.ndarray, w_h: np.ndarray):
    """Backpropagate through time; returns (dxp, dw_h).

    dhout holds the loss gradient w.r.t. every per-step hidden output; dxp is
    the gradient w.r.t. the input pre-activations (the caller turns it into
    dW_x, db and dX with two matmuls).
    """
    t_steps, batch, four_h = gates.shape
    h = four_h // 4
    dxp = np.empty_like(gates)
    dw_h = np.zeros_like(w_h)
    dh = np.zeros((batch, h), dtype=gates.dtype)
    dc = np.zeros((batch, h), dtype=gates.dtype)
    for t in range(t_steps - 1, -1, -1):
        g_i = gates[t, :, :h]
        g_f = gates[t, :, h:2 * h]
        g_g = gates[t, :, 2 * h:3 * h]
        g_o = gates[t, :, 3 * h:]
        dh_t = dhout[t] + dh
        d_o = dh_t * tanhc[t]
        dc = dc + dh_t * g_o * (1.0 - tanhc[t] ** 2)
        c_prev = cells[t - 1] if t > 0 else 0.0
        d_i = dc * g_g
        d_f = dc * c_prev
        d_g = dc * g_i
        dc = dc * g_f
        dxp_t = dxp[t]
        dxp_t[:, :h] = d_i * g_i * (1.0 - g_i)
        dxp_t[:, h:2 * h] = d_f * g_f * (1.0 - g_f)
        dxp_t[:, 2 * h:3 * h] = d_g * (1.0 - g_g ** 2)
        dxp_t[:, 3 * h:] = d_o * g_o * (1.0 - g_o)
        dh = dxp_t @ w_h
        if t > 0:
            dw_h += dxp_t.T @ hout[t - 1]
    return dxp, dw_h
