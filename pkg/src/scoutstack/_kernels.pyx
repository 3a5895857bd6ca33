# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled training kernels; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs, pow, isfinite
from libc.stdlib cimport malloc, free

cnp.import_array()


# largest double below 1 and smallest normal double: keep outputs strictly inside (0, 1)
cdef double P_HI = 0.99999999999999988898
cdef double P_LO = 2.2250738585072014e-308


cdef inline double _sigmoid(double z) noexcept nogil:
    cdef double e, p
    if z >= 0:
        p = 1.0 / (1.0 + exp(-z))
    else:
        e = exp(z)
        p = e / (1.0 + e)
    if p > P_HI:
        return P_HI
    if p < P_LO:
        return P_LO
    return p


cdef struct Net:
    int n_layers
    int *sizes
    Py_ssize_t *w_off
    Py_ssize_t *b_off
    Py_ssize_t *a_off      # offset of each layer's activations in the scratch buffer
    Py_ssize_t a_total


cdef int _net_init(Net *net, const long[::1] sizes) except -1:
    cdef int L = sizes.shape[0] - 1
    cdef int l
    cdef Py_ssize_t off = 0, aoff = 0
    net.n_layers = L
    net.sizes = <int *> malloc((L + 1) * sizeof(int))
    net.w_off = <Py_ssize_t *> malloc(L * sizeof(Py_ssize_t))
    net.b_off = <Py_ssize_t *> malloc(L * sizeof(Py_ssize_t))
    net.a_off = <Py_ssize_t *> malloc((L + 1) * sizeof(Py_ssize_t))
    if not (net.sizes and net.w_off and net.b_off and net.a_off):
        raise MemoryError()
    for l in range(L + 1):
        net.sizes[l] = sizes[l]
        net.a_off[l] = aoff
        aoff += sizes[l]
    net.a_total = aoff
    for l in range(L):
        net.w_off[l] = off
        off += sizes[l] * sizes[l + 1]
        net.b_off[l] = off
        off += sizes[l + 1]
    return 0


cdef void _net_free(Net *net) noexcept:
    free(net.sizes)
    free(net.w_off)
    free(net.b_off)
    free(net.a_off)


cdef double _forward_one(Net *net, const double *theta, const double *x,
                         double *act, double *pre) noexcept nogil:
    # act/pre hold every layer's activations and pre-activations for one sample
    cdef int l, i, j, n_in, n_out
    cdef double s
    cdef const double *w
    cdef double *a_in
    cdef double *a_out
    cdef double *z_out
    for i in range(net.sizes[0]):
        act[i] = x[i]
    for l in range(net.n_layers):
        n_in = net.sizes[l]
        n_out = net.sizes[l + 1]
        a_in = act + net.a_off[l]
        a_out = act + net.a_off[l + 1]
        z_out = pre + net.a_off[l + 1]
        for i in range(n_out):
            w = theta + net.w_off[l] + i * n_in
            s = theta[net.b_off[l] + i]
            for j in range(n_in):
                s += w[j] * a_in[j]
            z_out[i] = s
            if l == net.n_layers - 1:
                a_out[i] = _sigmoid(s)
            else:
                a_out[i] = s if s > 0 else 0.0
    return act[net.a_off[net.n_layers]]


cdef double _loss_grad(Net *net, const double *theta, const double[:, ::1] X,
                       const double *y, const double *sw, const long *idx, Py_ssize_t n,
                       double delta, double *grad, double *act, double *pre,
                       double *dbuf) noexcept nogil:
    cdef Py_ssize_t k, row, p_total
    cdef int l, i, j, n_in, n_out
    cdef double p, r, ar, loss = 0.0, dr, g
    cdef const double *w
    cdef double *gw
    cdef double *a_in
    cdef double *d_out
    cdef double *d_in
    p_total = net.b_off[net.n_layers - 1] + net.sizes[net.n_layers]
    for k in range(p_total):
        grad[k] = 0.0
    for k in range(n):
        row = idx[k] if idx != NULL else k
        p = _forward_one(net, theta, &X[row, 0], act, pre)
        r = p - y[row]
        ar = fabs(r)
        if ar <= delta:
            loss += sw[row] * 0.5 * r * r
            dr = r
        else:
            loss += sw[row] * delta * (ar - 0.5 * delta)
            dr = delta if r > 0 else -delta
        # dbuf mirrors the activation layout and holds dLoss/dz per unit
        dbuf[net.a_off[net.n_layers]] = sw[row] * dr * p * (1.0 - p)
        for l in range(net.n_layers - 1, -1, -1):
            n_in = net.sizes[l]
            n_out = net.sizes[l + 1]
            a_in = act + net.a_off[l]
            d_out = dbuf + net.a_off[l + 1]
            for i in range(n_out):
                g = d_out[i]
                grad[net.b_off[l] + i] += g
                if g != 0.0:
                    gw = grad + net.w_off[l] + i * n_in
                    for j in range(n_in):
                        gw[j] += g * a_in[j]
            if l > 0:
                d_in = dbuf + net.a_off[l]
                for j in range(n_in):
                    d_in[j] = 0.0
                for i in range(n_out):
                    g = d_out[i]
                    if g != 0.0:
                        w = theta + net.w_off[l] + i * n_in
                        for j in range(n_in):
                            d_in[j] += g * w[j]
                for j in range(n_in):
                    if pre[net.a_off[l] + j] <= 0.0:
                        d_in[j] = 0.0
    return loss


cdef void _adamw(double *theta, const double *grad, double *m, double *v, const double *mask,
                 Py_ssize_t n, long t, double lr, double beta1, double beta2, double eps,
                 double wd) noexcept nogil:
    cdef Py_ssize_t i
    cdef double c1 = 1.0 - pow(beta1, <double> t)
    cdef double c2 = 1.0 - pow(beta2, <double> t)
    cdef double g, mhat, vhat
    for i in range(n):
        g = grad[i]
        m[i] = beta1 * m[i] + (1.0 - beta1) * g
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
        mhat = m[i] / c1
        vhat = v[i] / c2
        theta[i] -= lr * mhat / (sqrt(vhat) + eps) + lr * wd * mask[i] * theta[i]


def forward_batch(double[::1] flat, sizes, X):
    cdef const long[::1] s = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Net net
    cdef Py_ssize_t k, n = Xv.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    _net_init(&net, s)
    act = np.empty(net.a_total, dtype=np.float64)
    pre = np.empty(net.a_total, dtype=np.float64)
    cdef double[::1] av = act, pv = pre
    try:
        with nogil:
            for k in range(n):
                o[k] = _forward_one(&net, &flat[0], &Xv[k, 0], &av[0], &pv[0])
    finally:
        _net_free(&net)
    return out


def loss_grad(double[::1] flat, sizes, X, y, sw, double delta, double[::1] grad):
    cdef const long[::1] s = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(sw, dtype=np.float64)
    cdef Net net
    cdef double loss
    _net_init(&net, s)
    scratch = np.empty(3 * net.a_total, dtype=np.float64)
    cdef double[::1] sc = scratch
    try:
        with nogil:
            loss = _loss_grad(&net, &flat[0], Xv, &yv[0], &wv[0], NULL, Xv.shape[0], delta,
                              &grad[0], &sc[0], &sc[net.a_total], &sc[2 * net.a_total])
    finally:
        _net_free(&net)
    return loss


def adamw_update(double[::1] flat, const double[::1] grad, double[::1] m, double[::1] v,
                 const double[::1] mask, long t, double lr, double beta1, double beta2,
                 double eps, double weight_decay):
    with nogil:
        _adamw(&flat[0], &grad[0], &m[0], &v[0], &mask[0], flat.shape[0], t, lr, beta1,
               beta2, eps, weight_decay)


def train_epoch(double[::1] flat, sizes, X, y, sw, order, long batch_size, double delta,
                double[::1] m, double[::1] v, const double[::1] mask, long t, double lr,
                double beta1, double beta2, double eps, double weight_decay):
    cdef const long[::1] s = np.ascontiguousarray(sizes, dtype=np.int64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] wv = np.ascontiguousarray(sw, dtype=np.float64)
    cdef const long[::1] ov = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t n = ov.shape[0], start, nb, i, P = flat.shape[0]
    cdef long k = 0, bad = -1
    cdef double total = 0.0, loss
    cdef bint ok
    cdef Net net
    _net_init(&net, s)
    grad = np.zeros(P, dtype=np.float64)
    scratch = np.empty(3 * net.a_total, dtype=np.float64)
    cdef double[::1] gv = grad, sc = scratch
    try:
        with nogil:
            start = 0
            while start < n:
                nb = batch_size if start + batch_size <= n else n - start
                loss = _loss_grad(&net, &flat[0], Xv, &yv[0], &wv[0], &ov[start], nb, delta,
                                  &gv[0], &sc[0], &sc[net.a_total], &sc[2 * net.a_total])
                ok = isfinite(loss)
                if ok:
                    for i in range(P):
                        if not isfinite(gv[i]):
                            ok = False
                            break
                if not ok:
                    bad = k
                    break
                total += loss
                t += 1
                _adamw(&flat[0], &gv[0], &m[0], &v[0], &mask[0], P, t, lr, beta1, beta2, eps,
                       weight_decay)
                start += batch_size
                k += 1
    finally:
        _net_free(&net)
    return total, t, bad
