# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled restricted Dempster fold; mirrors ``_fold_py.restricted_fold``."""

from libc.stdlib cimport free, malloc


def restricted_fold(hyps, masses, Py_ssize_t n_labels):
    cdef Py_ssize_t n = len(hyps)
    cdef Py_ssize_t i, j, h
    cdef double m, keep, z, theta = 1.0, z_prod = 1.0
    cdef double *s

    if len(masses) != n:
        raise ValueError("hyps and masses differ in length")
    if n_labels < 1:
        raise ValueError("n_labels must be positive")
    s = <double *> malloc(n_labels * sizeof(double))
    if s == NULL:
        raise MemoryError()
    try:
        for j in range(n_labels):
            s[j] = 0.0
        for i in range(n):
            h = hyps[i]
            m = masses[i]
            if h < 0 or m <= 0.0:
                continue
            if h >= n_labels:
                raise IndexError(f"hypothesis index {h} outside frame of size {n_labels}")
            keep = 1.0 - m
            z = 0.0
            for j in range(n_labels):
                if j != h:
                    s[j] = s[j] * keep
                    z += s[j]
            s[h] = s[h] + theta * m
            theta = theta * keep
            z += s[h] + theta
            for j in range(n_labels):
                s[j] = s[j] / z
            theta = theta / z
            z_prod = z_prod * z
        return [s[j] for j in range(n_labels)], theta, z_prod
    finally:
        free(s)
