"""Hot numeric kernels: one LSTM layer forward/backward, output layer.

Written in the numpy subset numba's nopython mode accepts (2-D contiguous
np.dot, basic slicing, elementwise ufuncs) so the same source runs either
compiled or plain. Arrays are time-major: (T, B, dim).

Weight layout per layer: W has shape (1 + d_in + h, 4h). Row 0 is the bias,
rows [1, 1+d_in) multiply the input, the rest multiply the previous hidden
state. Gate order along the second axis: input, forget, output, candidate.
"""

import numpy as np


def lstm_layer_forward_impl(X, W):
    """Run one LSTM layer over a (T, B, d_in) batch.

    Returns (Hout, C, Ct, Gf, Hin): hidden states, cell states, tanh(cell),
    activated gates, and the augmented [1, x_t, h_{t-1}] inputs — everything
    the backward pass needs.
    """
    T, B, d_in = X.shape
    H4 = W.shape[1]
    H = H4 // 4
    K = 1 + d_in + H

    Hin = np.empty((T, B, K))
    Gf = np.empty((T, B, H4))
    C = np.empty((T, B, H))
    Ct = np.empty((T, B, H))
    Hout = np.empty((T, B, H))

    prev_h = np.zeros((B, H))
    prev_c = np.zeros((B, H))
    for t in range(T):
        Hin[t, :, 0] = 1.0
        Hin[t, :, 1 : 1 + d_in] = X[t]
        Hin[t, :, 1 + d_in :] = prev_h
        A = np.dot(Hin[t], W)
        gi = 1.0 / (1.0 + np.exp(-A[:, 0:H]))
        gf = 1.0 / (1.0 + np.exp(-A[:, H : 2 * H]))
        go = 1.0 / (1.0 + np.exp(-A[:, 2 * H : 3 * H]))
        gc = np.tanh(A[:, 3 * H :])
        Gf[t, :, 0:H] = gi
        Gf[t, :, H : 2 * H] = gf
        Gf[t, :, 2 * H : 3 * H] = go
        Gf[t, :, 3 * H :] = gc
        cell = gf * prev_c + gi * gc
        C[t] = cell
        Ct[t] = np.tanh(cell)
        Hout[t] = go * Ct[t]
        prev_h = Hout[t]
        prev_c = cell
    return Hout, C, Ct, Gf, Hin


def lstm_layer_backward_impl(dHout, W, Hout, C, Ct, Gf, Hin):
    """Backpropagate one LSTM layer.

    dHout is the gradient arriving at the layer's hidden-state sequence
    (callers fold any extra gradient on the final state into dHout[T-1]).
    Returns (dX, dW).
    """
    T, B, K = Hin.shape
    H = Hout.shape[2]
    d_in = K - 1 - H

    WT = np.ascontiguousarray(W.T)
    dA = np.empty((T, B, 4 * H))
    dX = np.empty((T, B, d_in))
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    zero_prev = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dht = dHout[t] + dh
        gi = Gf[t, :, 0:H]
        gf = Gf[t, :, H : 2 * H]
        go = Gf[t, :, 2 * H : 3 * H]
        gc = Gf[t, :, 3 * H :]
        tc = Ct[t]
        dc = dc + dht * go * (1.0 - tc * tc)
        if t > 0:
            prev_c = C[t - 1]
        else:
            prev_c = zero_prev
        dA[t, :, 0:H] = (dc * gc) * gi * (1.0 - gi)
        dA[t, :, H : 2 * H] = (dc * prev_c) * gf * (1.0 - gf)
        dA[t, :, 2 * H : 3 * H] = (dht * tc) * go * (1.0 - go)
        dA[t, :, 3 * H :] = (dc * gi) * (1.0 - gc * gc)
        dHin = np.dot(dA[t], WT)
        dX[t] = dHin[:, 1 : 1 + d_in]
        dh = dHin[:, 1 + d_in :].copy()
        dc = dc * gf
    # single dgemm for the weight gradient: (K, T*B) x (T*B, 4H)
    Hin2 = np.ascontiguousarray(Hin.reshape(T * B, K).T)
    dA2 = dA.reshape(T * B, 4 * H)
    dW = np.dot(Hin2, dA2)
    return dX, dW


def dense_sigmoid_forward_impl(Hseq, Wo):
    """Per-timestep affine + logistic output.

    Hseq is (T, B, d1), Wo is (1 + d1, d_out) with the bias in row 0.
    Returns (Y, Haug) where Haug is the flattened augmented input kept for
    the backward pass.
    """
    T, B, d1 = Hseq.shape
    d_out = Wo.shape[1]
    n = T * B
    Haug = np.empty((n, 1 + d1))
    Haug[:, 0] = 1.0
    Haug[:, 1:] = Hseq.reshape(n, d1)
    Z = np.dot(Haug, Wo)
    Y = 1.0 / (1.0 + np.exp(-Z))
    return Y.reshape(T, B, d_out), Haug


def dense_sigmoid_backward_impl(dY, Y, Haug, Wo):
    """Backward for the output layer; returns (dH, dWo)."""
    T, B, d_out = dY.shape
    n = T * B
    d1 = Wo.shape[0] - 1
    dZ = (dY * Y * (1.0 - Y)).reshape(n, d_out)
    HaugT = np.ascontiguousarray(Haug.T)
    dWo = np.dot(HaugT, dZ)
    WoT = np.ascontiguousarray(Wo[1:].T)
    dH = np.dot(dZ, WoT)
    return dH.reshape(T, B, d1), dWo
