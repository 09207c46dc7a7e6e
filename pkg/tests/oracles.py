"""Independent reference computations used by the tests."""
import itertools
import struct

import numpy as np
from scipy.optimize import linprog


def atoms_from_counts(counts):
    """Positions of unit atoms: counts [2, 0, 1] -> [0, 0, 2]."""
    return np.repeat(np.arange(len(counts)), counts)


def brute_force_w2(counts_a, counts_b):
    """Min over all assignments of k equal atoms of the mean squared distance."""
    pa = atoms_from_counts(counts_a)
    pb = atoms_from_counts(counts_b)
    k = len(pa)
    assert len(pb) == k
    best = min(sum((pa[i] - pb[j]) ** 2 for i, j in enumerate(perm))
               for perm in itertools.permutations(range(k)))
    return best / k


def best_assignment(counts_a, counts_b):
    pa = atoms_from_counts(counts_a)
    pb = atoms_from_counts(counts_b)
    perm = min(itertools.permutations(range(len(pa))),
               key=lambda p: sum((pa[i] - pb[j]) ** 2 for i, j in enumerate(p)))
    return {int(pa[i]): int(pb[j]) for i, j in enumerate(perm)}


def lp_w2(a, b):
    """Discrete OT cost by linear programming on the full n x n plan."""
    n = len(a)
    C = (np.arange(n)[:, None] - np.arange(n)[None, :]) ** 2
    # Row sums of the plan equal a, column sums equal b.
    rows = np.kron(np.eye(n), np.ones(n))
    cols = np.kron(np.ones(n), np.eye(n))
    res = linprog(C.ravel(), A_eq=np.vstack([rows, cols]), b_eq=np.concatenate([a, b]),
                  bounds=(0, None), method="highs")
    assert res.success
    return res.fun


def dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft_filter_2d(u, lam):
    """Bending filter by explicit DFT matrices (no FFT)."""
    M, N = u.shape
    WM, WN = dft_matrix(M), dft_matrix(N)
    fm = 2 * np.pi * np.array([k if k <= M // 2 else k - M for k in range(M)]) / M
    fn = 2 * np.pi * np.array([k if k <= N // 2 else k - N for k in range(N)]) / N
    # Even lengths: the Nyquist bin's sign does not matter for |k|^4.
    k2 = fm[:, None] ** 2 + fn[None, :] ** 2
    U = WM @ u @ WN.T
    out = np.conj(WM).T @ (U / (1 + lam * k2 ** 2)) @ np.conj(WN) / (M * N)
    return out.real


CODES = {"u1": 2, "i2": 4, "i4": 8, "f4": 16, "f8": 64}


def fixture_bytes(values, dtype="f4", endian="<", slope=0.0, inter=0.0, dims=None,
                  pixdim=(1.0, 1.0, 1.0), sform=None, sizeof_hdr=348, magic=b"n+1\x00"):
    """NIfTI-1 file assembled field by field from the standard header layout."""
    values = np.asarray(values)
    dims = values.shape if dims is None else dims
    hdr = bytearray(348)
    struct.pack_into(endian + "i", hdr, 0, sizeof_hdr)
    dim = [len(dims)] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into(endian + "8h", hdr, 40, *dim)
    struct.pack_into(endian + "h", hdr, 70, CODES[dtype])
    struct.pack_into(endian + "h", hdr, 72, 8 * np.dtype(dtype).itemsize)
    struct.pack_into(endian + "8f", hdr, 76, 1.0, *pixdim, 0, 0, 0, 0)
    struct.pack_into(endian + "f", hdr, 108, 352.0)
    struct.pack_into(endian + "2f", hdr, 112, slope, inter)
    if sform is not None:
        struct.pack_into(endian + "h", hdr, 254, 1)
        struct.pack_into(endian + "12f", hdr, 280, *np.asarray(sform, float)[:3].ravel())
    hdr[344:348] = magic
    body = values.astype(endian + dtype).tobytes(order="F")
    return bytes(hdr) + b"\x00" * 4 + body
