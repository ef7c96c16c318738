# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see _numpy.py for the reference)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, ::1] x, double[:, :, :, ::1] k, int stride):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t F = k.shape[0], kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t ho = (H - kh) // stride + 1
    cdef Py_ssize_t wo = (W - kw) // stride + 1
    out_arr = np.zeros((F, ho, wo))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t f, c, oy, ox, i, j
    cdef double acc
    with nogil:
        for f in range(F):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for c in range(C):
                        for i in range(kh):
                            for j in range(kw):
                                acc += x[c, oy * stride + i, ox * stride + j] * k[f, c, i, j]
                    out[f, oy, ox] = acc
    return out_arr


def conv2d_grad_input(double[:, :, ::1] g, double[:, :, :, ::1] k, int stride,
                      Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t F = g.shape[0], ho = g.shape[1], wo = g.shape[2]
    cdef Py_ssize_t C = k.shape[1], kh = k.shape[2], kw = k.shape[3]
    gx_arr = np.zeros((C, h, w))
    cdef double[:, :, ::1] gx = gx_arr
    cdef Py_ssize_t f, c, oy, ox, i, j
    cdef double gv
    with nogil:
        for f in range(F):
            for oy in range(ho):
                for ox in range(wo):
                    gv = g[f, oy, ox]
                    for c in range(C):
                        for i in range(kh):
                            for j in range(kw):
                                gx[c, oy * stride + i, ox * stride + j] += gv * k[f, c, i, j]
    return gx_arr


def conv2d_grad_kernels(double[:, :, ::1] g, double[:, :, ::1] x, int stride,
                        Py_ssize_t kh, Py_ssize_t kw):
    cdef Py_ssize_t F = g.shape[0], ho = g.shape[1], wo = g.shape[2]
    cdef Py_ssize_t C = x.shape[0]
    gk_arr = np.zeros((F, C, kh, kw))
    cdef double[:, :, :, ::1] gk = gk_arr
    cdef Py_ssize_t f, c, oy, ox, i, j
    cdef double gv
    with nogil:
        for f in range(F):
            for oy in range(ho):
                for ox in range(wo):
                    gv = g[f, oy, ox]
                    for c in range(C):
                        for i in range(kh):
                            for j in range(kw):
                                gk[f, c, i, j] += gv * x[c, oy * stride + i, ox * stride + j]
    return gk_arr


def avg_pool2d_forward(double[:, :, ::1] x, int window, int stride):
    cdef Py_ssize_t C = x.shape[0], H = x.shape[1], W = x.shape[2]
    cdef Py_ssize_t ho = (H - window) // stride + 1
    cdef Py_ssize_t wo = (W - window) // stride + 1
    out_arr = np.zeros((C, ho, wo))
    cdef double[:, :, ::1] out = out_arr
    cdef double inv = 1.0 / (window * window)
    cdef Py_ssize_t c, oy, ox, i, j
    cdef double acc
    with nogil:
        for c in range(C):
            for oy in range(ho):
                for ox in range(wo):
                    acc = 0.0
                    for i in range(window):
                        for j in range(window):
                            acc += x[c, oy * stride + i, ox * stride + j]
                    out[c, oy, ox] = acc * inv
    return out_arr


def avg_pool2d_grad(double[:, :, ::1] g, int window, int stride,
                    Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t C = g.shape[0], ho = g.shape[1], wo = g.shape[2]
    gx_arr = np.zeros((C, h, w))
    cdef double[:, :, ::1] gx = gx_arr
    cdef double inv = 1.0 / (window * window)
    cdef Py_ssize_t c, oy, ox, i, j
    cdef double share
    with nogil:
        for c in range(C):
            for oy in range(ho):
                for ox in range(wo):
                    share = g[c, oy, ox] * inv
                    for i in range(window):
                        for j in range(window):
                            gx[c, oy * stride + i, ox * stride + j] += share
    return gx_arr
