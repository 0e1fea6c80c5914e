# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled scatter kernels.

Accumulation order per pixel matches the numpy fallback exactly (taps in
the given order), so the two backends are interchangeable bit for bit.
"""

cimport numpy as cnp

ctypedef cnp.int32_t PIX
ctypedef cnp.int64_t OFF


def direct_cube(const PIX[:, ::1] pix, const OFF[::1] t0, const OFF[::1] t1,
                const double[::1] wts, double[:, :, ::1] out):
    cdef Py_ssize_t width = pix.shape[0], height = pix.shape[1], ntaps = wts.shape[0]
    cdef Py_ssize_t k, a, b, aa, bb, d0, d1
    cdef double wt
    with nogil:
        for k in range(ntaps):
            wt = wts[k]
            d0 = <Py_ssize_t> t0[k]
            d1 = <Py_ssize_t> t1[k]
            for a in range(width):
                aa = a + d0
                if aa >= width:
                    aa -= width
                for b in range(height):
                    bb = b + d1
                    if bb >= height:
                        bb -= height
                    out[pix[aa, bb], a, b] += wt


def direct_level(const PIX[:, ::1] pix, const OFF[::1] t0, const OFF[::1] t1,
                 const double[::1] wts, Py_ssize_t y, double[:, ::1] out):
    cdef Py_ssize_t width = pix.shape[0], height = pix.shape[1], ntaps = wts.shape[0]
    cdef Py_ssize_t k, a, b, aa, bb, d0, d1
    cdef double wt
    with nogil:
        for k in range(ntaps):
            wt = wts[k]
            d0 = <Py_ssize_t> t0[k]
            d1 = <Py_ssize_t> t1[k]
            for a in range(width):
                aa = a + d0
                if aa >= width:
                    aa -= width
                for b in range(height):
                    bb = b + d1
                    if bb >= height:
                        bb -= height
                    if pix[aa, bb] == y:
                        out[a, b] += wt


cdef inline Py_ssize_t _lo(Py_ssize_t d) noexcept nogil:
    return -d if d < 0 else 0


cdef inline Py_ssize_t _hi(Py_ssize_t d, Py_ssize_t n) noexcept nogil:
    return n - d if d > 0 else n


def noncyclic_cube(const PIX[:, ::1] pix, const OFF[::1] c0, const OFF[::1] c1,
                   const double[::1] wts, double[:, :, ::1] out):
    cdef Py_ssize_t width = pix.shape[0], height = pix.shape[1], ntaps = wts.shape[0]
    cdef Py_ssize_t k, a, b, alo, ahi, blo, bhi, d0, d1
    cdef double wt
    with nogil:
        for k in range(ntaps):
            wt = wts[k]
            d0 = <Py_ssize_t> c0[k]
            d1 = <Py_ssize_t> c1[k]
            alo = _lo(d0)
            ahi = _hi(d0, width)
            blo = _lo(d1)
            bhi = _hi(d1, height)
            for a in range(alo, ahi):
                for b in range(blo, bhi):
                    out[pix[a + d0, b + d1], a, b] += wt


def noncyclic_level(const PIX[:, ::1] pix, const OFF[::1] c0, const OFF[::1] c1,
                    const double[::1] wts, Py_ssize_t y, double[:, ::1] out):
    cdef Py_ssize_t width = pix.shape[0], height = pix.shape[1], ntaps = wts.shape[0]
    cdef Py_ssize_t k, a, b, alo, ahi, blo, bhi, d0, d1
    cdef double wt
    with nogil:
        for k in range(ntaps):
            wt = wts[k]
            d0 = <Py_ssize_t> c0[k]
            d1 = <Py_ssize_t> c1[k]
            alo = _lo(d0)
            ahi = _hi(d0, width)
            blo = _lo(d1)
            bhi = _hi(d1, height)
            for a in range(alo, ahi):
                for b in range(blo, bhi):
                    if pix[a + d0, b + d1] == y:
                        out[a, b] += wt
