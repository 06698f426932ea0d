"""Closed-form moment matrices for internally homogeneous populations.

These are hand-reduced systems for symmetric initial data.  They duplicate
what :func:`dissemination.moments.reduce_exchangeable` computes from the
general engine and serve as an independent check on it.

Group-level means use the layout ``(group, state)`` with the state fastest.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "homogeneous_system",
    "leader_follower_system",
    "two_group_system",
    "two_group_mean_matrix",
    "two_group_second_moment_matrices",
    "SECOND_MOMENT_CLASSES",
]


def homogeneous_system(Q, lam, gamma, w, n_agents):
    """``(A, Lambda)`` for one exchangeable population with own arrivals.

    ``A = Q^T + diag(gamma_k (I w_k - 1))`` and ``Lambda = diag(lam_k)``.
    """
    Q = np.asarray(Q, dtype=float)
    gamma, w = np.asarray(gamma, float), np.asarray(w, float)
    A = Q.T + np.diag(gamma * (n_agents * w - 1.0))
    return A, np.diag(np.asarray(lam, dtype=float))


def two_group_system(Q, lam_a, lam_b, gamma, w_aa, w_ab, w_ba, w_bb, n_a, n_b):
    """``(A, Lambda)`` of the mean equations for groups A and B.

    ``w_xy[k]`` is the mean number of units one agent of group x sends to one
    agent of group y in state k.  Layout ``(A_1..A_d, B_1..B_d)``.
    """
    Q = np.asarray(Q, dtype=float)
    d = Q.shape[0]
    g = np.asarray(gamma, float)
    A = np.zeros((2 * d, 2 * d))
    A[:d, :d] = Q.T + np.diag(g * (n_a * np.asarray(w_aa) - 1.0))
    A[:d, d:] = np.diag(g * n_b * np.asarray(w_ba))
    A[d:, :d] = np.diag(g * n_a * np.asarray(w_ab))
    A[d:, d:] = Q.T + np.diag(g * (n_b * np.asarray(w_bb) - 1.0))
    Lam = np.diag(np.concatenate([np.asarray(lam_a, float), np.asarray(lam_b, float)]))
    return A, Lam


def leader_follower_system(Q, lam_l, lam_f, gamma, w_ll, w_lf, w_fl, w_ff, n_agents):
    """``(A, Lambda)`` for one leader and ``n_agents - 1`` exchangeable followers.

    Layout ``(L_1..L_d, F_1..F_d)``; ``w_lf`` is leader-to-one-follower.
    """
    return two_group_system(Q, lam_l, lam_f, gamma, w_ll, w_lf, w_fl, w_ff, 1, n_agents - 1)


def two_group_mean_matrix(n_a, n_b, w_aa, w_ab, w_ba, w_bb):
    """Unmodulated ``Abar`` with ``m' = gamma (Abar - I) m + lambda``."""
    return np.array([[n_a * w_aa, n_b * w_ba], [n_a * w_ab, n_b * w_bb]], dtype=float)


# order of the unmodulated second-moment vector
SECOND_MOMENT_CLASSES = ("AA", "BB", "AA'", "BB'", "AB")


def two_group_second_moment_matrices(n_a, n_b, gamma, lam_a, lam_b, w, w2):
    """Unmodulated ``(Abar, A_m)`` with ``v' = gamma (Abar - I) v + A_m m``.

    ``v`` is ordered as :data:`SECOND_MOMENT_CLASSES`: one A agent's factorial
    moment, one B agent's, two distinct A agents, two distinct B agents, and
    an A/B pair; ``m = (m_A, m_B)``.  Arrivals are per-agent singleton streams.

    Parameters
    ----------
    w : dict
        Means ``w["AA"], w["AB"], w["BA"], w["BB"]`` (source, destination).
    w2 : dict
        Factorial second moments keyed by source then destination pair, e.g.
        ``w2["AAA"]`` (one A source, same A destination twice), ``w2["AAA'"]``
        (two distinct A destinations), ``w2["AAB"]`` (an A and a B destination).
    """
    ja, jb = n_a * (n_a - 1), n_b * (n_b - 1)
    aa, ab, ba, bb = w["AA"], w["AB"], w["BA"], w["BB"]

    def row(x, y):
        # destinations in groups with source means x (from A) and y (from B)
        return [n_a * x[0] * x[1], n_b * y[0] * y[1], ja * x[0] * x[1], jb * y[0] * y[1],
                n_a * n_b * (x[0] * y[1] + x[1] * y[0])]

    Abar = np.array([
        row((aa, aa), (ba, ba)),
        row((ab, ab), (bb, bb)),
        row((aa, aa), (ba, ba)),
        row((ab, ab), (bb, bb)),
        row((aa, ab), (ba, bb)),
    ], dtype=float)
    g = gamma
    # the A/B row couples each arrival stream to the other group's mean
    Am = np.array([
        [2 * lam_a + g * n_a * w2["AAA"], g * n_b * w2["BAA"]],
        [g * n_a * w2["ABB"], 2 * lam_b + g * n_b * w2["BBB"]],
        [2 * lam_a + g * n_a * w2["AAA'"], g * n_b * w2["BAA'"]],
        [g * n_a * w2["ABB'"], 2 * lam_b + g * n_b * w2["BBB'"]],
        [lam_b + g * n_a * w2["AAB"], lam_a + g * n_b * w2["BAB"]],
    ], dtype=float)
    return Abar, Am
