"""Pure-Python exterior-algebra kernels on bitmask-encoded sparse forms.

A basis covector theta^{i1} ^ ... ^ theta^{ip} (1 <= i1 < ... < ip <= n) is
encoded as the integer mask sum(1 << (i-1)); a sparse form is a dict
{mask: complex}. These functions are the hot inner loops; the compiled
twin in _cy.pyx implements the same signatures.
"""

IMPL = "python"


def merge_sign(a: int, b: int) -> int:
    """Sign of theta^A ^ theta^B relative to the sorted basis form of A|B.

    Assumes a & b == 0. The sign is (-1)**inversions where an inversion is a
    pair (x in A, y in B) with x > y.
    """
    inv = 0
    while b:
        j = (b & -b).bit_length() - 1
        inv += (a >> (j + 1)).bit_count()
        b &= b - 1
    return -1 if inv & 1 else 1


def wedge_kd(A: dict, B: dict) -> dict:
    """Wedge product of two mask-dicts."""
    out: dict = {}
    for ka, va in A.items():
        for kb, vb in B.items():
            if ka & kb:
                continue
            v = va * vb
            if merge_sign(ka, kb) < 0:
                v = -v
            k = ka | kb
            w = out.get(k)
            out[k] = v if w is None else w + v
    return out


def interior_kd(v, A: dict) -> dict:
    """Interior product i_v applied to a mask-dict; v is a coefficient sequence."""
    out: dict = {}
    for ka, va in A.items():
        m = ka
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            c = v[j]
            if c == 0:
                continue
            sgn = -1 if (ka & ((1 << j) - 1)).bit_count() & 1 else 1
            val = c * va if sgn > 0 else -c * va
            k = ka & ~(1 << j)
            w = out.get(k)
            out[k] = val if w is None else w + val
    return out


def rho_hat_kd(n: int, M, A: dict) -> dict:
    """Derivation action of an endomorphism: sum_{ij} M[j,i] theta^i ^ i_{e_j}.

    M is indexable as M[j][i] with the column convention xi(e_c) = sum_r M[r][c] e_r;
    on a one-form this is theta -> theta o xi.
    """
    out: dict = {}
    for ka, va in A.items():
        m = ka
        while m:
            j = (m & -m).bit_length() - 1
            m &= m - 1
            s1 = -1 if (ka & ((1 << j) - 1)).bit_count() & 1 else 1
            rest = ka & ~(1 << j)
            row = M[j]
            for i in range(n):
                c = row[i]
                if c == 0:
                    continue
                bit = 1 << i
                if rest & bit:
                    continue
                sgn = s1
                if (rest & (bit - 1)).bit_count() & 1:
                    sgn = -sgn
                val = c * va if sgn > 0 else -c * va
                k = rest | bit
                w = out.get(k)
                out[k] = val if w is None else w + val
    return out
