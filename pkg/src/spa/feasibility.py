"""Operator Bellman equations solved by backward feasibility iteration.

Produces the cumulative feasibility kappa(x, t), the time-minimizing policy
pi(x, t) and the state-time feasibility function eta, split into success and
failure termination events.

Eta is stored per start time t as a sparse matrix with one row per start
state x and one column per final state-time, column index t_f * |X| + x_f.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np
import scipy.sparse as sp

from .core import CapacityError, DomainError, TgMdp

ARGMAX_TOL = 1e-12
TIME_TOL = 1e-9
ROLLOUT_GUARD = 10**6


@dataclass
class Stff:
    """Sparse termination-event distribution for one goal-conditioned policy."""

    success: list[sp.csr_matrix]
    failure: list[sp.csr_matrix]
    n_states: int
    horizon: int
    goal_id: str = "g"
    failure_method: str = "recursive"

    def _col(self, x_f: int, t_f: int) -> int:
        return t_f * self.n_states + x_f

    def _decode(self, cols: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return cols % self.n_states, cols // self.n_states

    def _row(self, mats: list[sp.csr_matrix], x: int, t: int) -> list[tuple[int, int, float]]:
        m = mats[t]
        lo, hi = m.indptr[x], m.indptr[x + 1]
        cols, vals = m.indices[lo:hi], m.data[lo:hi]
        xs, ts = self._decode(cols)
        out = [(int(a), int(b), float(p)) for a, b, p in zip(xs, ts, vals) if p > 0]
        return sorted(out, key=lambda e: (e[1], e[0]))

    def success_events(self, x: int, t: int) -> list[tuple[int, int, float]]:
        return self._row(self.success, x, t)

    def failure_events(self, x: int, t: int) -> list[tuple[int, int, float]]:
        return self._row(self.failure, x, t)

    def events(self, x: int, t: int) -> list[tuple[str, int, int, float]]:
        """All termination events as (kind, x_f, t_f, p) with kind success|failure."""
        return ([("success", *e) for e in self.success_events(x, t)]
                + [("failure", *e) for e in self.failure_events(x, t)])

    def total_mass(self) -> np.ndarray:
        out = np.zeros((self.n_states, self.horizon + 1))
        for t in range(self.horizon + 1):
            out[:, t] = (np.asarray(self.success[t].sum(axis=1)).ravel()
                         + np.asarray(self.failure[t].sum(axis=1)).ravel())
        return out

    def rows(self) -> Iterator[tuple[str, int, int, int, int, float, str]]:
        for t in range(self.horizon + 1):
            for x in range(self.n_states):
                for kind, xf, tf, p in self.events(x, t):
                    yield self.goal_id, x, t, xf, tf, p, kind

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["goal", "x", "t", "x_f", "t_f", "p", "event"])
            for g, x, t, xf, tf, p, kind in self.rows():
                w.writerow([g, x, t, xf, tf, repr(p), kind])

    def stacked(self, which: str) -> sp.csr_matrix:
        """Rows indexed by start column t*|X|+x, same column layout."""
        mats = self.success if which == "success" else self.failure
        return sp.vstack(mats, format="csr")


class FeasibilitySolution(NamedTuple):
    kappa: np.ndarray
    policy: np.ndarray
    stff: Stff


def _scale_rows(m: sp.csr_matrix, v: np.ndarray) -> sp.csr_matrix:
    """diag(v) @ m without building the diagonal."""
    out = m.copy()
    out.data = out.data * np.repeat(v, np.diff(out.indptr))
    return out


def _stacked(problem: TgMdp, t: int) -> sp.csr_matrix:
    """All action matrices at t stacked row-wise: row a*n + x is P(.|x, a)."""
    return sp.vstack([problem.matrix(a, t) for a in range(problem.n_actions)], format="csr")


def _select(q: np.ndarray, score: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per row: max of q, then among near-maximizers the minimal score, lowest index on ties."""
    kappa = q.max(axis=1)
    in_set = q >= kappa[:, None] - ARGMAX_TOL
    masked = np.where(in_set, score, np.inf)
    best = masked.min(axis=1)
    choice = np.argmax(masked <= best[:, None] + TIME_TOL, axis=1)
    return kappa, choice


def _is_closed_form_case(problem: TgMdp) -> bool:
    f = problem.availability
    det_f = bool(np.all((f == 0) | (f == 1)))
    goal_states = np.flatnonzero(f.max(axis=(1, 2)) > 0)
    return problem.transition.deterministic and det_f and len(goal_states) <= 1


def feasibility_iteration(problem: TgMdp) -> FeasibilitySolution:
    """Backward recursion for kappa, the time-minimizing policy and eta."""
    n, n_a, T = problem.n_states, problem.n_actions, problem.horizon
    f = problem.availability
    ncol = n * (T + 1)
    kappa = np.zeros((n, T + 1))
    policy = np.zeros((n, T + 1), dtype=np.int64)
    succ: list[sp.csr_matrix] = [None] * (T + 1)
    fail: list[sp.csr_matrix] = [None] * (T + 1)
    k_next = np.zeros(n)
    tau_next = np.zeros(n)
    rows = np.arange(n)
    stationary = problem.transition.stationary
    stacked = _stacked(problem, 0) if stationary else None
    for t in range(T, -1, -1):
        fa = f[:, :, t]
        if t < T:
            if not stationary:
                stacked = _stacked(problem, t)
            pk = (stacked @ k_next).reshape(n_a, n).T
            pt = (stacked @ tau_next).reshape(n_a, n).T
        else:
            pk = pt = np.zeros((n, n_a))
        q = fa + (1.0 - fa) * pk
        score = t * fa + (1.0 - fa) * pt
        k_t, pi_t = _select(q, score)
        kappa[:, t], policy[:, t] = k_t, pi_t
        f_pi = f[rows, pi_t, t]
        here = sp.csr_matrix((np.ones(n), (rows, t * n + rows)), shape=(n, ncol))
        pos = (k_t > 0).astype(np.float64)
        if t < T:
            p_pi = stacked[pi_t * n + rows]
            cont = _scale_rows(p_pi, 1.0 - f_pi)
            s_t = _scale_rows(here, f_pi) + cont @ succ[t + 1]
            pos_next = (k_next > 0).astype(np.float64)
            drop = (1.0 - f_pi) * (p_pi @ (1.0 - pos_next))
            f_t = cont @ _scale_rows(fail[t + 1], pos_next) + _scale_rows(here, drop)
            tau_t = t * f_pi + (1.0 - f_pi) * (p_pi @ tau_next)
        else:
            s_t = _scale_rows(here, f_pi)
            f_t = _scale_rows(here, 1.0 - f_pi)
            tau_t = t * f_pi
        # kappa = 0 rows: self-map failure with p = 1.
        f_t = _scale_rows(sp.csr_matrix(f_t), pos) + _scale_rows(here, 1.0 - pos)
        s_t = _scale_rows(sp.csr_matrix(s_t), pos)
        s_t.eliminate_zeros()
        f_t.eliminate_zeros()
        succ[t], fail[t] = s_t, f_t
        k_next, tau_next = k_t, tau_t
    method = "closed_form" if _is_closed_form_case(problem) else "recursive"
    stff = Stff(succ, fail, n, T, problem.goal_id, method)
    return FeasibilitySolution(kappa, policy, stff)


def kappa_from_eta(stff: Stff) -> np.ndarray:
    """kappa(x, t) as the total success mass of eta."""
    out = np.zeros((stff.n_states, stff.horizon + 1))
    for t in range(stff.horizon + 1):
        out[:, t] = np.asarray(stff.success[t].sum(axis=1)).ravel()
    return out


def forward_rollout_failure(problem: TgMdp, policy: np.ndarray, kappa: np.ndarray) -> list[sp.csr_matrix]:
    """Failure events by forward unrolling of the controlled dynamics.

    Failure mass sits at the last state-time with positive feasibility: the
    goal is missed there and the next state has zero feasibility (or the
    horizon ends). Starts with kappa = 0 map to themselves.
    """
    n, T = problem.n_states, problem.horizon
    if n * (T + 1) > ROLLOUT_GUARD:
        raise CapacityError(f"|X|*(T_f+1) = {n * (T + 1)} exceeds {ROLLOUT_GUARD}; "
                            "use the closed-form failure path")
    f = problem.availability
    out = []
    for t0 in range(T + 1):
        data: dict[tuple[int, int], float] = {}
        for x0 in range(n):
            if kappa[x0, t0] <= 0:
                data[(x0, t0 * n + x0)] = 1.0
                continue
            dist = np.zeros(n)
            dist[x0] = 1.0
            for t in range(t0, T + 1):
                pi_t = policy[:, t]
                f_pi = f[np.arange(n), pi_t, t]
                miss = dist * (1.0 - f_pi)
                if t == T:
                    for x in np.flatnonzero(miss > 0):
                        data[(x0, t * n + x)] = data.get((x0, t * n + x), 0.0) + miss[x]
                    break
                nxt = np.zeros(n)
                for x in np.flatnonzero(miss > 0):
                    row = problem.matrix(int(pi_t[x]), t).getrow(x)
                    dead = 0.0
                    for x2, p in zip(row.indices, row.data):
                        if kappa[x2, t + 1] > 0:
                            nxt[x2] += miss[x] * p
                        else:
                            dead += miss[x] * p
                    if dead > 0:
                        data[(x0, t * n + x)] = data.get((x0, t * n + x), 0.0) + dead
                dist = nxt
                if not dist.any():
                    break
        if data:
            r, c = zip(*data.keys())
            m = sp.csr_matrix((list(data.values()), (r, c)), shape=(n, n * (T + 1)))
        else:
            m = sp.csr_matrix((n, n * (T + 1)))
        out.append(m)
    return out


def compose_stffs(first: Stff, second: Stff) -> Stff:
    """Sequential composition: second starts where first succeeds.

    First's failures are absorbing failures of the composite.
    """
    if first.n_states != second.n_states or first.horizon != second.horizon:
        raise DomainError("STFFs must share the state-time domain")
    s2, f2 = second.stacked("success"), second.stacked("failure")
    succ, fail = [], []
    for t in range(first.horizon + 1):
        s = sp.csr_matrix(first.success[t] @ s2)
        fl = sp.csr_matrix(first.failure[t] + first.success[t] @ f2)
        s.eliminate_zeros()
        fl.eliminate_zeros()
        succ.append(s)
        fail.append(fl)
    return Stff(succ, fail, first.n_states, first.horizon,
                f"{first.goal_id}+{second.goal_id}", "composed")


def expected_completion_time(stff: Stff, x: int, t: int) -> float:
    """Sum of t_f * eta over success events (unnormalized, as in the policy criterion)."""
    return sum(tf * p for _, tf, p in stff.success_events(x, t))
