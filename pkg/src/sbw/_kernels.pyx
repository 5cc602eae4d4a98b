# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels. Mirrors ``sbw._pykernels`` function for function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY

cnp.import_array()


cdef double _optimal_total(const double[:] costs_row, const cnp.int64_t[:] order,
                           const double[:] residual, double T, double reward) nogil:
    cdef Py_ssize_t k
    cdef double start = 0.0, end, width, stationary
    for k in range(order.shape[0]):
        width = residual[order[k]]
        if width <= 0.0:
            continue
        end = start + width
        stationary = sqrt(reward * T / costs_row[order[k]]) - T
        if stationary < end:
            if stationary < start:
                return start
            return stationary
        start = end
    return start


cdef void _fill_greedy(const cnp.int64_t[:] order, const double[:] residual,
                       double total, double[:] out) nogil:
    cdef Py_ssize_t k, m
    cdef double remaining = total, take
    for k in range(out.shape[0]):
        out[k] = 0.0
    for k in range(order.shape[0]):
        if remaining <= 0.0:
            break
        m = order[k]
        take = residual[m] if residual[m] < remaining else remaining
        if take > 0.0:
            out[m] = take
            remaining -= take


cdef double _node_utility(const double[:] costs_row, const double[:] row,
                          double T, double reward) nogil:
    cdef Py_ssize_t m
    cdef double own = 0.0, cost = 0.0, grand
    for m in range(row.shape[0]):
        own += row[m]
        cost += costs_row[m] * row[m]
    grand = own + T
    if grand > 0.0:
        return reward * own / grand - cost
    return -cost


def optimal_total(const double[:] sorted_costs, const double[:] sorted_residual,
                  double others_total, double reward):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.arange(sorted_costs.shape[0], dtype=np.int64)
    return _optimal_total(sorted_costs, order, sorted_residual, others_total, reward)


def fill_greedy(const cnp.int64_t[:] order, const double[:] residual, double total, double[:] out):
    _fill_greedy(order, residual, total, out)
    return np.asarray(out)


def best_response(const double[:] costs_row, const cnp.int64_t[:] order,
                  const double[:] residual, double others_total, double reward):
    out = np.zeros(costs_row.shape[0])
    cdef double[:] out_v = out
    cdef double total = _optimal_total(costs_row, order, residual, others_total, reward)
    _fill_greedy(order, residual, total, out_v)
    return out


def node_utility(const double[:] costs_row, const double[:] row,
                 double others_total, double reward):
    return _node_utility(costs_row, row, others_total, reward)


def gauss_seidel_sweep(const double[:, :] costs, const cnp.int64_t[:, :] orders,
                       const double[:] capacities, double[:, :] profile, double reward):
    cdef Py_ssize_t n_nodes = profile.shape[0], n_users = profile.shape[1]
    cdef Py_ssize_t n, i, m
    cdef double T, total, change, max_change = 0.0, acc
    before = np.empty(n_nodes)
    after = np.empty(n_nodes)
    cdef double[:] before_v = before, after_v = after
    cdef double[:] colsum = np.empty(n_users)
    cdef double[:] residual = np.empty(n_users)
    cdef double[:] rowsum = np.empty(n_nodes)
    cdef double[:] new_row = np.empty(n_users)
    for n in range(n_nodes):
        with nogil:
            for m in range(n_users):
                colsum[m] = 0.0
            for i in range(n_nodes):
                acc = 0.0
                for m in range(n_users):
                    colsum[m] += profile[i, m]
                    acc += profile[i, m]
                rowsum[i] = acc
            T = 0.0
            for i in range(n_nodes):
                T += rowsum[i]
            T -= rowsum[n]
        if T <= 0.0:
            raise ZeroDivisionError(n)
        with nogil:
            for m in range(n_users):
                residual[m] = capacities[m] - (colsum[m] - profile[n, m])
                if residual[m] < 0.0:
                    residual[m] = 0.0
            before_v[n] = _node_utility(costs[n], profile[n], T, reward)
            total = _optimal_total(costs[n], orders[n], residual, T, reward)
            _fill_greedy(orders[n], residual, total, new_row)
            for m in range(n_users):
                change = fabs(new_row[m] - profile[n, m])
                if change > max_change:
                    max_change = change
                profile[n, m] = new_row[m]
            after_v[n] = _node_utility(costs[n], profile[n], T, reward)
    return max_change, before, after


def grid_argmax(const double[:] axis0, const double[:] axis1, const double[:] axis2,
                double c0, double c1, double c2, double others_total, double reward):
    cdef Py_ssize_t i, j, k, bi = 0, bj = 0, bk = 0
    cdef double T = others_total, best = -INFINITY, a, b, c, x, value
    with nogil:
        for i in range(axis0.shape[0]):
            a = axis0[i]
            for j in range(axis1.shape[0]):
                b = axis1[j]
                for k in range(axis2.shape[0]):
                    c = axis2[k]
                    x = (a + b) + c
                    value = reward * x / (T + x) - ((a * c0 + b * c1) + c * c2)
                    if value > best:
                        best = value
                        bi = i
                        bj = j
                        bk = k
    return bi, bj, bk, best


def draw_indices(const double[:] cumulative, const double[:] uniforms):
    cdef Py_ssize_t n = cumulative.shape[0], s, lo, hi, mid, last_positive = 0
    cdef double total = cumulative[n - 1], target, prev = 0.0
    for lo in range(n):
        if cumulative[lo] > prev:
            last_positive = lo
        prev = cumulative[lo]
    out = np.empty(uniforms.shape[0], dtype=np.int64)
    cdef cnp.int64_t[:] out_v = out
    with nogil:
        for s in range(uniforms.shape[0]):
            target = uniforms[s] * total
            # first index with cumulative > target
            lo = 0
            hi = n
            while lo < hi:
                mid = (lo + hi) >> 1
                if cumulative[mid] <= target:
                    lo = mid + 1
                else:
                    hi = mid
            out_v[s] = lo if lo < last_positive else last_positive
    return out
