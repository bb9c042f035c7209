"""Primal-dual SCA solver and the two benchmark schemes.

The outer loop refreshes the SCA expansion at the current iterate. The inner
loop alternates closed-form primal steps (beam power from the stationarity
polynomial, private/common splits from their quadratic / ratio forms, a
subgradient step on the common-rate shares) with projected subgradient
steps on the five multiplier families, using ``delta_t = delta0 / sqrt(t)``.

After every inner loop the iterate is made feasible (total power rescaled,
splits projected, common shares fitted under the exact common rate) and an
outer step is only accepted if it does not lower the exact sum rate or
raise the QoS shortfall. A rejected step returns to the last accepted primal
point but keeps the multipliers; ``patience`` consecutive rejections stop
the run.

Inside the loops rates are spectral efficiencies (rate / W); the returned
:class:`~rsma_leo.model.AllocationState` and report use bits/s again, while
:class:`DualState` keeps the multipliers of the ``1 / W``-scaled Lagrangian.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from numba import njit

from . import kkt
from .assign import greedy_assign, random_assign
from .model import AllocationState, Assignment, evaluate

log = logging.getLogger(__name__)

FAMILIES = ("lambda1", "lambda2", "lambda3", "lambda4", "lambda5")
_STEP_KEYS = FAMILIES + ("c",)

# inner-loop exit codes
_CAPPED, _CONVERGED, _DIVERGED = 0, 1, 2


@dataclass
class DualState:
    lambda1: np.ndarray   # (U,)
    lambda2: np.ndarray   # (M, K)
    lambda3: np.ndarray   # (M, K)
    lambda4: np.ndarray   # (M, K)
    lambda5: float
    delta: float = 1.0    # step multiplier of the last update

    @classmethod
    def initial(cls, M, U, K, value=0.1):
        return cls(np.full(U, value), np.full((M, K), value), np.full((M, K), value),
                   np.full((M, K), value), float(value))

    def copy(self):
        return DualState(self.lambda1.copy(), self.lambda2.copy(), self.lambda3.copy(),
                         self.lambda4.copy(), self.lambda5, self.delta)

    def family(self, name):
        return np.atleast_1d(np.asarray(getattr(self, name), dtype=float))


@dataclass
class SolverOptions:
    tol_outer: float = 1e-4
    tol_feas: float = 1e-6
    tol_dual: float = 1e-4
    inner_max: int = 500
    outer_max: int = 50
    # dimensionless gains; the solver multiplies each by a data-derived scale
    delta0: dict = field(default_factory=lambda: {
        "lambda1": 1.0, "lambda2": 1.0, "lambda3": 1.0, "lambda4": 1.0,
        "lambda5": 1.0, "c": 2.0})
    dual_init: float = 0.1
    lambda1_cap: float = 1e6
    split_relax: float = 0.5    # fraction of the way to the closed-form splits per step
    patience: int = 3           # consecutive rejected outer steps before stopping
    seed: int = 0
    record_trace: bool = True

    def __post_init__(self):
        unknown = set(self.delta0) - set(_STEP_KEYS)
        if unknown:
            raise ValueError(f"unknown step families: {sorted(unknown)}")
        merged = {key: 1.0 for key in _STEP_KEYS}
        merged["c"] = 2.0
        merged.update(self.delta0)
        if any(not v > 0 for v in merged.values()):
            raise ValueError("step gains must be positive")
        self.delta0 = merged
        if not 0 < self.split_relax <= 1:
            raise ValueError("split_relax must lie in (0, 1]")
        if self.inner_max < 1 or self.outer_max < 1 or self.patience < 1:
            raise ValueError("iteration caps and patience must be at least 1")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass
class SolveReport:
    scheme: str
    alloc: AllocationState
    rates: object               # RateReport
    assignment: Assignment
    duals: DualState
    trace: dict                 # per inner iteration, parallel lists
    outer_sum_rates: list       # exact sum rate of each accepted outer iterate
    inner_iterations: list      # inner iterations used per outer iteration
    inner_converged: list
    converged: bool
    feasible: bool
    stop_reason: str
    iterations: int
    wall_time: float

    @property
    def sum_rate(self):
        return self.rates.sum_rate


def update_common_splits(c, duals, assignment, delta):
    """Subgradient step ``c <- max(0, c + delta (1 + lam1_u - lam2_mk))`` on assigned entries."""
    x = assignment.x
    step = delta * (1.0 + duals.lambda1[None, :, None] - duals.lambda2[:, None, :])
    return np.where(x == 1, np.maximum(0.0, c + step), c)


def _steps(delta):
    if isinstance(delta, dict):
        return {name: delta.get(name, 0.0) for name in FAMILIES}
    return {name: delta for name in FAMILIES}


def apply_dual_step(duals, residuals, delta):
    """``lam <- max(0, lam + delta * residual)`` for each family; returns a new state."""
    steps = _steps(delta)
    out = duals.copy()
    for name in FAMILIES:
        new = np.maximum(0.0, duals.family(name) + steps[name] * np.asarray(residuals[name], float))
        setattr(out, name, float(new[0]) if name == "lambda5" else new.reshape(getattr(duals, name).shape))
    out.delta = float(max(np.max(v) for v in steps.values()))
    return out


def constraint_residuals(config, channels, assignment, alloc, rates):
    """Subgradients of the five constraint families at ``alloc`` (bits/s, W)."""
    x = assignment.x
    return {
        "lambda1": config.min_rate - rates.per_user_total,
        "lambda2": (x * alloc.c).sum(axis=1) - rates.common_rate,
        "lambda3": channels.f * alloc.p - config.interference_threshold,
        "lambda4": alloc.eta0 + (x * alloc.eta).sum(axis=1) - 1.0,
        "lambda5": float(alloc.p.sum()) - config.total_power,
    }


def update_duals(state, rates, config, duals, delta, channels, assignment):
    """One projected subgradient step on all multipliers at ``state``.

    ``delta`` is a scalar or a per-family dict.
    """
    residuals = constraint_residuals(config, channels, assignment, state, rates)
    return apply_dual_step(duals, residuals, delta)


def interference_cap(i_th, f):
    """Largest power with ``f * p <= i_th`` in floating point (``inf`` where ``f == 0``)."""
    f = np.asarray(f, dtype=float)
    safe = np.where(f > 0, f, 1.0)
    cap = i_th / safe
    # the rounded quotient can overshoot by one ulp
    cap = np.where(safe * cap > i_th, np.nextafter(cap, 0.0), cap)
    return np.where(f > 0, cap, np.inf)


def fixed_power(config, channels):
    """Equal per-slot power ``min(I_th / f, P_tot / (M K))``."""
    share = config.total_power / (config.num_beams * config.num_subcarriers)
    return np.minimum(interference_cap(config.interference_threshold, channels.f), share)


# ---------------------------------------------------------------------------
# compiled inner loop
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _inner_loop(h, base, counts, users, slot_m, slot_k, f, p_cap,
                tau, omega, tau_c, omega_c, hc, base_c, ref_c,
                p, eta0, eta, c, lam1, lam2, lam3, lam4, lam5,
                gains, s3, s4, s5, rmin, i_th, p_tot, fixed,
                relax, inner_max, tol_dual, lam1_cap, trace):
    """Run the inner primal-dual loop in place; returns ``(iterations, exit code)``.

    ``trace`` rows receive ``[sum_rate, max_violation, 5 norms, 5 changes]``.
    """
    S, n = h.shape
    U = lam1.size
    M, K = lam2.shape
    priv = np.zeros(n)
    per_user = np.zeros(U)
    active = np.zeros((M, K), dtype=np.bool_)
    res2 = np.zeros((M, K))
    res3 = np.full((M, K), -i_th)
    res4 = np.full((M, K), -1.0)
    for s in range(S):
        active[slot_m[s], slot_k[s]] = True
    l1 = np.zeros(n)
    w = np.zeros(n)
    mu1 = np.zeros(n)
    mu2 = np.zeros(n)
    mu3 = np.zeros(n)
    new_eta = np.zeros(n)
    changes = np.zeros(5)
    t = 0
    for t in range(1, inner_max + 1):
        dt = 1.0 / math.sqrt(t)
        lam5_now = lam5[0]
        per_user[:] = 0.0
        p_sum = 0.0
        for s in range(S):
            m = slot_m[s]
            k = slot_k[s]
            ns = counts[s]
            for i in range(ns):
                l1[i] = lam1[users[s, i]]
            l2 = lam2[m, k]
            l4 = lam4[m, k]
            price = lam3[m, k] * f[s] + lam5_now
            if not fixed:
                p[s] = kkt.slot_best_power(h[s], base[s], eta[s], eta0[s], ns, tau[s], omega[s],
                                           tau_c[s], omega_c[s], hc[s], base_c[s], ref_c[s],
                                           l1[:ns], l2, price, p_cap[s])
            p_sum += p[s]
            # splits
            # below the floor the closed forms are evaluated at the floor value:
            # the splits saturate, the projection rescales them and lambda4 recovers
            l4 = max(l4, kkt.LAMBDA4_FLOOR)
            for i in range(ns):
                w[i] = (1.0 + l1[i]) * tau[s, i] / kkt.LN2
            wc = l2 * tau_c[s] / kkt.LN2
            lam4e = l4 + (wc * hc[s] * p[s] / ref_c[s] if ref_c[s] > 0.0 else 0.0)
            kkt.slot_eta_quad(h[s], base[s], eta[s], ns, w, lam4e, p[s], mu1, mu2, mu3)
            for i in range(ns):
                e = kkt._eta_root(mu1[i], mu2[i], mu3[i])
                new_eta[i] = eta[s, i] if np.isnan(e) else e
            e0 = min(max(wc / l4, 0.0), 1.0)
            total = e0
            for i in range(ns):
                total += new_eta[i]
            res4[m, k] = total - 1.0
            if total > 1.0:
                e0 /= total
                for i in range(ns):
                    new_eta[i] /= total
            # relaxed step towards the closed forms; a convex combination stays within C4
            eta0[s] += relax * (e0 - eta0[s])
            for i in range(ns):
                eta[s, i] += relax * (new_eta[i] - eta[s, i])
            res3[m, k] = f[s] * p[s] - i_th
            # surrogate rates (clipped: true rates are nonnegative)
            common = kkt.slot_rates(h[s], base[s], eta[s], eta0[s], ns, tau[s], omega[s],
                                    tau_c[s], omega_c[s], hc[s], base_c[s], ref_c[s], p[s], priv)
            common = max(common, 0.0)
            # common-rate shares: subgradient proposal, then projection under the common rate
            proposed = 0.0
            for i in range(ns):
                c[s, i] = max(0.0, c[s, i] + gains[5] * dt * (1.0 + l1[i] - l2))
                proposed += c[s, i]
            res2[m, k] = proposed - common
            kkt._project_row(c[s, :ns], common)
            for i in range(ns):
                per_user[users[s, i]] += c[s, i] + max(priv[i], 0.0)
        # dual steps
        ch = 0.0
        shortfall = 0.0
        diverged = False
        for u in range(U):
            g = rmin - per_user[u]
            if g > 0.0:
                shortfall = max(shortfall, g / rmin)
            new = max(0.0, lam1[u] + gains[0] * dt * g)
            ch += (new - lam1[u]) ** 2
            lam1[u] = new
            if new > lam1_cap and g > 0.0:
                diverged = True
        changes[0] = math.sqrt(ch)
        c2 = 0.0
        c3 = 0.0
        c4 = 0.0
        for m in range(M):
            for k in range(K):
                if active[m, k]:
                    new = max(0.0, lam2[m, k] + gains[1] * dt * res2[m, k])
                    c2 += (new - lam2[m, k]) ** 2
                    lam2[m, k] = new
                new = max(0.0, lam3[m, k] + gains[2] * dt * s3[m, k] * res3[m, k])
                c3 += (new - lam3[m, k]) ** 2
                lam3[m, k] = new
                new = max(0.0, lam4[m, k] + gains[3] * dt * s4[m, k] * res4[m, k])
                c4 += (new - lam4[m, k]) ** 2
                lam4[m, k] = new
        changes[1] = math.sqrt(c2)
        changes[2] = math.sqrt(c3)
        changes[3] = math.sqrt(c4)
        new = max(0.0, lam5_now + gains[4] * dt * s5 * (p_sum - p_tot))
        changes[4] = abs(new - lam5_now)
        lam5[0] = new
        row = trace[t - 1]
        row[0] = np.sum(per_user)
        row[1] = max(shortfall, max(p_sum - p_tot, 0.0) / p_tot)
        row[2] = math.sqrt(np.sum(lam1 ** 2))
        row[3] = math.sqrt(np.sum(lam2 ** 2))
        row[4] = math.sqrt(np.sum(lam3 ** 2))
        row[5] = math.sqrt(np.sum(lam4 ** 2))
        row[6] = lam5[0]
        row[7:12] = changes
        if diverged:
            return t, _DIVERGED
        if t > 1 and np.max(changes) < tol_dual:
            return t, _CONVERGED
    return t, _CAPPED


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

TRACE_COLUMNS = ("sum_rate", "max_violation") + FAMILIES + tuple(f + "_change" for f in FAMILIES)


class _Engine:
    def __init__(self, config, channels, assignment, options, power=None):
        self.config = config
        self.channels = channels
        self.assignment = assignment
        self.options = options
        self.fixed = power is not None
        M, U, K = config.shape
        self.slots, self.users, self.mask = kkt.layout(assignment)
        S = len(self.slots)
        self.counts = self.mask.sum(axis=1).astype(np.int64)
        self.ms = np.array([m for m, _ in self.slots], dtype=np.int64)
        self.ks = np.array([k for _, k in self.slots], dtype=np.int64)
        self.h = kkt.gather(self.slots, self.users, self.mask, channels.h)
        ip = kkt.gather(self.slots, self.users, self.mask, channels.ip)
        self.base = np.where(self.mask, ip + config.noise_variance, 1.0)
        self.f = channels.f[self.ms, self.ks].astype(float)
        self.p_cap = np.minimum(interference_cap(config.interference_threshold, self.f),
                                config.total_power)
        start = fixed_power(config, channels) if power is None else np.asarray(power, float)
        self.p = np.minimum(start[self.ms, self.ks].astype(float), self.p_cap) if S else np.zeros(0)
        self.eta0 = np.full(S, 0.5)
        self.eta = np.where(self.mask, 0.5 / np.maximum(self.counts, 1)[:, None], 0.0)
        self.c = np.zeros(self.h.shape)
        self.rmin = config.min_rate / config.bandwidth
        d = DualState.initial(M, U, K, options.dual_init)
        self.lam1, self.lam2, self.lam3, self.lam4 = d.lambda1, d.lambda2, d.lambda3, d.lambda4
        # the power box already enforces C3, so its residual is never positive and a
        # nonzero start would only add an I_th-dependent price to slack slots
        self.lam3[:] = 0.0
        self.lam5 = np.array([d.lambda5])
        self.delta = 1.0
        self.traces = []

    # -- state ------------------------------------------------------------
    def _snapshot(self):
        return tuple(a.copy() for a in (self.p, self.eta0, self.eta, self.c, self.lam1,
                                         self.lam2, self.lam3, self.lam4, self.lam5))

    def _restore_primal(self, snap):
        self.p, self.eta0, self.eta, self.c = (a.copy() for a in snap[:4])

    def duals(self):
        return DualState(self.lam1.copy(), self.lam2.copy(), self.lam3.copy(), self.lam4.copy(),
                         float(self.lam5[0]), self.delta)

    def allocation(self):
        M, U, K = self.config.shape
        alloc = AllocationState.zeros(M, U, K)
        if not self.slots:
            return alloc
        W = self.config.bandwidth
        alloc.p[self.ms, self.ks] = self.p
        alloc.eta0[self.ms, self.ks] = self.eta0
        ms = np.broadcast_to(self.ms[:, None], self.users.shape)[self.mask]
        ks = np.broadcast_to(self.ks[:, None], self.users.shape)[self.mask]
        us = self.users[self.mask]
        alloc.eta[ms, us, ks] = self.eta[self.mask]
        alloc.c[ms, us, ks] = self.c[self.mask] * W
        return alloc

    def _scales(self, batch):
        # natural multiplier magnitudes at lam1 = 0, lam2 = 1
        a = np.sum(batch.tau, axis=1) / kkt.LN2 + batch.tau_c / kkt.LN2
        a = np.where(a > 0, a, 1.0)
        M, _, K = self.config.shape
        s4 = np.full((M, K), float(np.mean(a)))
        s4[self.ms, self.ks] = a
        s3 = s4 / self.config.interference_threshold ** 2
        s5 = float(np.sum(a)) / self.config.total_power ** 2
        return s3, s4, s5

    # -- feasibility --------------------------------------------------------
    def make_feasible(self):
        """Rescale power, project splits and fit common shares under the exact common rate.

        Leftover common rate goes first to users short of the minimum rate,
        then equally to the slot's users.
        """
        total = float(self.p.sum())
        if total > self.config.total_power:
            self.p = self.p * (self.config.total_power / total)
        self.p = np.minimum(self.p, self.p_cap)
        self.eta0, self.eta = kkt.project_splits(self.eta0, self.eta)
        private, common = kkt.slot_sinrs(self.h, self.base, self.mask, self.p, self.eta0, self.eta)
        worst = np.min(common, axis=1)
        cap = np.log2(1.0 + np.where(np.isfinite(worst), worst, 0.0))
        priv = np.log2(1.0 + private) * self.mask
        self.c = kkt.simplex_projection(self.c * self.mask, cap)
        for s in range(len(self.slots)):
            n = self.counts[s]
            left = cap[s] - self.c[s, :n].sum()
            if left <= 0:
                continue
            for i in range(n):
                need = self.rmin - self.c[s, i] - priv[s, i]
                if need > 0 and left > 0:
                    give = min(need, left)
                    self.c[s, i] += give
                    left -= give
            if left > 0:
                self.c[s, :n] += left / n

    def _quality(self):
        report = evaluate(self.config, self.channels, self.allocation(), self.assignment)
        short = float(np.sum(np.maximum(-report.slack["C1"], 0.0))) / self.config.min_rate
        return report.sum_rate, short

    # -- loops ------------------------------------------------------------
    def run(self):
        opt = self.options
        cfg = self.config
        gains = np.array([opt.delta0[key] for key in _STEP_KEYS], dtype=float)
        outer_rates, inner_counts, inner_ok = [], [], []
        if not self.slots:
            return outer_rates, inner_counts, inner_ok, "empty"
        self.make_feasible()
        rate, short = self._quality()
        reason = "outer_max"
        rejected = 0
        for o in range(1, opt.outer_max + 1):
            batch = kkt.expand(self.slots, self.users, self.mask, self.h, self.base, self.f,
                               self.p, self.eta0, self.eta)
            s3, s4, s5 = self._scales(batch)
            snap = self._snapshot()
            trace = np.zeros((opt.inner_max, len(TRACE_COLUMNS)))
            n, code = _inner_loop(
                self.h, self.base, self.counts, self.users, self.ms, self.ks, self.f, self.p_cap,
                batch.tau, batch.omega, batch.tau_c, batch.omega_c, batch.hc, batch.base_c,
                batch.ref_c, self.p, self.eta0, self.eta, self.c,
                self.lam1, self.lam2, self.lam3, self.lam4, self.lam5,
                gains, s3, s4, s5, self.rmin, cfg.interference_threshold, cfg.total_power,
                self.fixed, opt.split_relax, opt.inner_max, opt.tol_dual, opt.lambda1_cap, trace)
            self.delta = 1.0 / math.sqrt(n)
            if opt.record_trace:
                self.traces.append((o, trace[:n]))
            inner_counts.append(int(n))
            inner_ok.append(code == _CONVERGED)
            self.make_feasible()
            new_rate, new_short = self._quality()
            tiny = 1e-9
            better = (new_short < short - tiny
                      or (new_short <= short + tiny and new_rate >= rate))
            if not better:
                # keep the multipliers, return to the last accepted primal point
                self._restore_primal(snap)
                rejected += 1
                if rejected >= opt.patience:
                    reason = "stalled"
                    break
                continue
            rejected = 0
            change = abs(new_rate - rate) / max(abs(rate), 1e-300)
            rate, short = new_rate, new_short
            outer_rates.append(rate)
            if code == _DIVERGED:
                reason = "infeasible"
                break
            if change < opt.tol_outer:
                reason = "tolerance"
                break
        return outer_rates, inner_counts, inner_ok, reason

    def trace_dict(self):
        out = {"outer": [], "inner": []}
        for name in TRACE_COLUMNS:
            out[name] = []
        for o, rows in self.traces:
            out["outer"].extend([o] * len(rows))
            out["inner"].extend(range(1, len(rows) + 1))
            for j, name in enumerate(TRACE_COLUMNS):
                col = rows[:, j] * self.config.bandwidth if name == "sum_rate" else rows[:, j]
                out[name].extend(col.tolist())
        return out


def _solve(scheme, config, channels, assignment, options, power=None):
    start = time.perf_counter()
    assignment.check()
    engine = _Engine(config, channels, assignment, options, power)
    outer_rates, inner_counts, inner_ok, reason = engine.run()
    alloc = engine.allocation()
    rates = evaluate(config, channels, alloc, assignment)
    feasible = (reason != "infeasible"
                and bool(np.all(rates.slack["C1"] >= -options.tol_feas * config.min_rate))
                and rates.max_violation(config) <= options.tol_feas)
    converged = reason in ("tolerance", "stalled", "empty")
    log.debug("%s: %s after %d outer iterations, %.6g bit/s", scheme, reason,
              len(inner_counts), rates.sum_rate)
    return SolveReport(
        scheme=scheme, alloc=alloc, rates=rates, assignment=assignment, duals=engine.duals(),
        trace=engine.trace_dict(), outer_sum_rates=outer_rates, inner_iterations=inner_counts,
        inner_converged=inner_ok, converged=converged, feasible=feasible, stop_reason=reason,
        iterations=int(sum(inner_counts)), wall_time=time.perf_counter() - start)


def solve_with_assignment(config, channels, assignment, options=None, power=None, scheme="custom"):
    """Optimise powers, splits and common shares for a given assignment.

    ``power`` fixes the per-slot powers (an ``(M, K)`` array) instead of
    optimising them.
    """
    return _solve(scheme, config, channels, assignment, options or SolverOptions(), power)


def solve_opt(config, channels, options=None):
    """Greedy assignment, then joint power / split / common-rate optimisation."""
    options = options or SolverOptions()
    M, U, K = config.shape
    assignment = greedy_assign(channels, M, K, U)
    return _solve("opt", config, channels, assignment, options)


def solve_fix_p(config, channels, options=None):
    """Greedy assignment with the equal power ``min(I_th / f, P_tot / (M K))``."""
    options = options or SolverOptions()
    M, U, K = config.shape
    assignment = greedy_assign(channels, M, K, U)
    return _solve("fix_p", config, channels, assignment, options, power=fixed_power(config, channels))


def solve_rand_x(config, channels, options=None, seed=None):
    """Random feasible assignment, everything else optimised as in :func:`solve_opt`."""
    options = options or SolverOptions()
    M, U, K = config.shape
    seed = options.seed if seed is None else seed
    assignment = random_assign(M, K, U, seed)
    return _solve("rand_x", config, channels, assignment, options)


SCHEMES = {"opt": solve_opt, "fix_p": solve_fix_p, "rand_x": solve_rand_x}
