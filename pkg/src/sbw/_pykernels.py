"""Pure-Python/numpy implementations of the hot kernels.

This module is the reference backend. ``sbw._kernels`` (Cython) mirrors every
function here with the same signature and the same floating-point operation
order, so the two backends agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

# Grid-search chunk size along the first axis, keeps temporaries < ~64 MB.
_GRID_CHUNK_POINTS = 2_000_000


def optimal_total(sorted_costs, sorted_residual, others_total, reward):
    """Return the maximizer of ``x*R/(T+x) - c(x)`` for the piecewise-linear cost.

    ``sorted_costs`` must be ascending; ``sorted_residual`` holds the capacity of
    each linear piece in the same order. Requires ``others_total > 0``.
    """
    T = others_total
    start = 0.0
    for k in range(sorted_costs.shape[0]):
        width = sorted_residual[k]
        if width <= 0.0:
            continue
        end = start + width
        stationary = math.sqrt(reward * T / sorted_costs[k]) - T
        if stationary < end:
            return start if stationary < start else stationary
        start = end
    return float(start)


def fill_greedy(order, residual, total, out):
    """Spread ``total`` over users in ``order``, cheapest first."""
    out[:] = 0.0
    remaining = total
    for k in range(order.shape[0]):
        if remaining <= 0.0:
            break
        m = order[k]
        take = residual[m] if residual[m] < remaining else remaining
        if take > 0.0:
            out[m] = take
            remaining -= take
    return out


def best_response(costs_row, order, residual, others_total, reward):
    sorted_costs = costs_row[order]
    sorted_residual = residual[order]
    total = optimal_total(sorted_costs, sorted_residual, others_total, reward)
    out = np.zeros(costs_row.shape[0])
    fill_greedy(order, residual, total, out)
    return out


def node_utility(costs_row, row, others_total, reward):
    own = float(np.sum(row))
    grand = own + others_total
    share = reward * own / grand if grand > 0.0 else 0.0
    return share - float(np.dot(costs_row, row))


def gauss_seidel_sweep(costs, orders, capacities, profile, reward):
    """One in-place sweep of best responses over nodes 0..N-1.

    Returns ``(max_change, before, after)`` where ``before[n]``/``after[n]`` are
    node n's utility immediately before and after its own update.
    """
    n_nodes = profile.shape[0]
    before = np.empty(n_nodes)
    after = np.empty(n_nodes)
    max_change = 0.0
    for n in range(n_nodes):
        others = profile.sum(axis=0) - profile[n]
        residual = np.maximum(capacities - others, 0.0)
        totals = profile.sum(axis=1)
        T = float(totals.sum() - totals[n])
        if T <= 0.0:
            raise ZeroDivisionError(n)
        before[n] = node_utility(costs[n], profile[n], T, reward)
        new_row = best_response(costs[n], orders[n], residual, T, reward)
        change = float(np.max(np.abs(new_row - profile[n])))
        if change > max_change:
            max_change = change
        profile[n] = new_row
        after[n] = node_utility(costs[n], new_row, T, reward)
    return max_change, before, after


def grid_argmax(axis0, axis1, axis2, c0, c1, c2, others_total, reward):
    """Exhaustive search of ``R*x/(T+x) - sum(c*a)`` over a 3-axis grid.

    Unused axes are passed as ``[0.0]`` with zero cost. Returns
    ``(i, j, k, best_value)``; ties keep the first point in C order.
    """
    T = others_total
    best = -np.inf
    best_idx = (0, 0, 0)
    b = axis1[None, :, None]
    c = axis2[None, None, :]
    bc = b * c1
    cc = c * c2
    plane = axis1.shape[0] * axis2.shape[0]
    step = max(1, _GRID_CHUNK_POINTS // plane)
    for lo in range(0, axis0.shape[0], step):
        a = axis0[lo:lo + step][:, None, None]
        x = (a + b) + c
        value = reward * x / (T + x) - ((a * c0 + bc) + cc)
        flat = int(np.argmax(value))
        v = float(value.flat[flat])
        if v > best:
            best = v
            i, j, k = np.unravel_index(flat, value.shape)
            best_idx = (lo + int(i), int(j), int(k))
    return best_idx[0], best_idx[1], best_idx[2], best


def draw_indices(cumulative, uniforms):
    """Map uniforms in [0, 1) to indices with P(i) proportional to weight i."""
    total = cumulative[-1]
    idx = np.searchsorted(cumulative, uniforms * total, side="right")
    last_positive = int(np.flatnonzero(np.diff(np.concatenate(([0.0], cumulative))) > 0)[-1])
    return np.minimum(idx, last_positive).astype(np.int64)
