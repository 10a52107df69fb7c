# cython: boundscheck=False
# cython: wraparound=False
"""Two-row LCS length kernel over integer-encoded token sequences."""

from cpython cimport array
import array


def lcs_length(const int[:] a, const int[:] b) -> int:
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    cdef array.array prev_arr = array.array("i", bytes(4 * (m + 1)))
    cdef array.array curr_arr = array.array("i", bytes(4 * (m + 1)))
    cdef int[::1] prev = prev_arr
    cdef int[::1] curr = curr_arr
    cdef int[::1] tmp
    cdef Py_ssize_t i, j
    cdef int ai
    for i in range(n):
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                curr[j + 1] = prev[j] + 1
            elif prev[j + 1] >= curr[j]:
                curr[j + 1] = prev[j + 1]
            else:
                curr[j + 1] = curr[j]
        tmp = prev
        prev = curr
        curr = tmp
    return prev[m]
