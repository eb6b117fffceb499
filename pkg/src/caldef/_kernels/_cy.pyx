# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled exterior-algebra kernels; semantics identical to _py.py."""

import numpy as np

IMPL = "cython"


cdef inline int _popcount(unsigned long long x) noexcept:
    cdef int c = 0
    while x:
        x &= x - 1
        c += 1
    return c


cdef inline int _lowbit_index(unsigned long long x) noexcept:
    cdef int j = 0
    while not (x & 1):
        x >>= 1
        j += 1
    return j


def merge_sign(a, b):
    """Sign of theta^A ^ theta^B relative to the sorted basis form of A|B."""
    cdef unsigned long long ua = a, ub = b
    cdef int inv = 0
    cdef int j
    while ub:
        j = _lowbit_index(ub & (~ub + 1))
        inv += _popcount(ua >> (j + 1))
        ub &= ub - 1
    return -1 if inv & 1 else 1


def wedge_kd(dict A, dict B):
    """Wedge product of two mask-dicts."""
    cdef dict out = {}
    cdef unsigned long long ka, kb, k, m
    cdef double complex va, vb, v
    cdef int inv, j
    for ka, va in A.items():
        for kb, vb in B.items():
            if ka & kb:
                continue
            inv = 0
            m = kb
            while m:
                j = _lowbit_index(m & (~m + 1))
                inv += _popcount(ka >> (j + 1))
                m &= m - 1
            v = va * vb
            if inv & 1:
                v = -v
            k = ka | kb
            if k in out:
                out[k] = out[k] + v
            else:
                out[k] = v
    return out


def interior_kd(v, dict A):
    """Interior product i_v on a mask-dict; v is a complex coefficient sequence."""
    cdef double complex[:] vv = np.ascontiguousarray(v, dtype=np.complex128)
    cdef dict out = {}
    cdef unsigned long long ka, m, k
    cdef double complex va, c, val
    cdef int j
    for ka, va in A.items():
        m = ka
        while m:
            j = _lowbit_index(m & (~m + 1))
            m &= m - 1
            c = vv[j]
            if c == 0:
                continue
            val = c * va
            if _popcount(ka & ((<unsigned long long>1 << j) - 1)) & 1:
                val = -val
            k = ka & ~(<unsigned long long>1 << j)
            if k in out:
                out[k] = out[k] + val
            else:
                out[k] = val
    return out


def rho_hat_kd(int n, M, dict A):
    """Derivation action of an endomorphism: sum_{ij} M[j,i] theta^i ^ i_{e_j}."""
    cdef double complex[:, :] MM = np.ascontiguousarray(M, dtype=np.complex128)
    cdef dict out = {}
    cdef unsigned long long ka, m, rest, bit, k
    cdef double complex va, c, val
    cdef int j, i, s1
    for ka, va in A.items():
        m = ka
        while m:
            j = _lowbit_index(m & (~m + 1))
            m &= m - 1
            s1 = 1
            if _popcount(ka & ((<unsigned long long>1 << j) - 1)) & 1:
                s1 = -1
            rest = ka & ~(<unsigned long long>1 << j)
            for i in range(n):
                c = MM[j, i]
                if c == 0:
                    continue
                bit = <unsigned long long>1 << i
                if rest & bit:
                    continue
                val = c * va
                if s1 < 0:
                    val = -val
                if _popcount(rest & (bit - 1)) & 1:
                    val = -val
                k = rest | bit
                if k in out:
                    out[k] = out[k] + val
                else:
                    out[k] = val
    return out
