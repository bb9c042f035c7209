"""Closed-form stationarity conditions for the per-slot subproblems.

Everything here works slot by slot: the users of one active beam/subcarrier
slot, with the SCA expansion of every rate term frozen at an operating
point. Rates are spectral efficiencies (bits/s/Hz), i.e. the Lagrangian is
scaled by ``1 / W`` so the multipliers stay O(1) whatever the bandwidth.

Per slot, with private weights ``w_u = (1 + lam1_u) tau_u / ln 2``, common
weight ``w_c = lam2 tau_c / ln 2`` and power price ``kappa = lam3 f + lam5``,
the surrogate Lagrangian in the beam power is

    Phi(p) = sum_u w_u ln gamma_u(p) + w_c ln gamma_c(p) - kappa p + const

where the common-stream interference term is replaced by its tangent at the
expansion point (a global minorant). Multiplying ``Phi'(p) = 0`` by
``p * prod_u (A_u + B_u p)`` gives a polynomial of degree ``n + 1``: a cubic
for the two-user slots of the default layout, linear for a single user.
``Phi`` is concave in ``log p``, so it has at most one positive stationary
point.

The per-slot kernels are compiled with numba; the batched helpers below
loop over them and are what the tests and the public API use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .sca import coeffs_array

LN2 = math.log(2.0)
LAMBDA4_FLOOR = 1e-9
ROOT_IMAG_TOL = 1e-7


class KKTError(ValueError):
    pass


@dataclass(frozen=True)
class CubicCoeffs:
    t3: float
    t2: float
    t1: float
    t0: float

    def as_array(self):
        return np.array([self.t3, self.t2, self.t1, self.t0])

    def __call__(self, p):
        return ((self.t3 * p + self.t2) * p + self.t1) * p + self.t0


@dataclass(frozen=True)
class QuadCoeffs:
    mu1: float
    mu2: float
    mu3: float


# ---------------------------------------------------------------------------
# printed coefficient expressions
# ---------------------------------------------------------------------------

def printed_cubic_coeffs(h, eta, x, ip, noise, gamma, gamma_c, lam1, lam2, lam3, lam5,
                         f, bandwidth):
    """The four boxed power-cubic coefficients, transcribed term by term.

    ``h, eta, x, gamma, lam1`` are per-user sequences of one slot; ``ip`` is a
    scalar or per-user GEO interference (the outer user's value is used).
    The double sum runs over ordered pairs ``u != j``. No attempt is made to
    repair the expressions: the solver uses :func:`slot_power_poly` instead.
    """
    h = np.asarray(h, float)
    eta = np.asarray(eta, float)
    x = np.asarray(x, float)
    gamma = np.asarray(gamma, float)
    lam1 = np.asarray(lam1, float)
    ip = np.broadcast_to(np.asarray(ip, float), h.shape)
    W = bandwidth
    t3 = t2 = t1 = t0 = 0.0
    n = h.size
    for u in range(n):
        a = ip[u] + noise
        pen = lam5 + f * lam3 * x[u]
        for j in range(n):
            if j == u:
                continue
            t3 += h[j] * h[u] * eta[j] * eta[u] * x[j] * x[u] * pen
            t2 += (h[j] * eta[u] * a * x[u] * pen
                   + h[u] * eta[j] * x[j] * (lam5 * a + f * lam3 * a * x[u]
                                             - h[j] * eta[u] * (lam2 * gamma_c + lam1[u] * gamma[u]) * W * x[u]))
            t1 += a * (lam5 * noise + f * lam3 * noise * x[u] + ip[u] * pen
                       + W * (-h[j] * eta[u] * (lam2 * gamma_c + gamma[u] + lam1[u] * gamma[u]) * x[u]
                              - h[u] * eta[j] * x[j] * (gamma[j] * x[j] + lam2 * gamma_c * x[u]
                                                        + lam1[u] * gamma[u] * x[u])))
            t0 += -a * a * W * (gamma[j] * x[j] + (lam2 * gamma_c + gamma[u] + lam1[u] * gamma[u]) * x[u])
    return CubicCoeffs(float(t3), float(t2), float(t1), float(t0))


def printed_quad_coeffs(u, h, x, ip, noise, gamma, lam1, lam4, p, bandwidth):
    """The boxed private-split sums ``(mu1, mu2, mu3)`` for user ``u``.

    The squared term of ``mu2`` is read as the square of the ``j``-th summand
    of ``mu1``, so ``mu2 = mu1**2 + 4 (...)`` term-wise. ``lam1`` is the
    scalar multiplier of user ``u``.
    """
    h = np.asarray(h, float)
    x = np.asarray(x, float)
    gamma = np.asarray(gamma, float)
    ip = np.broadcast_to(np.asarray(ip, float), h.shape)
    W = bandwidth
    mu1 = mu2 = mu3 = 0.0
    for j in range(h.size):
        if j == u:
            continue
        a = ip[j] + noise
        term = -lam4 * a + h[j] * p * W * (-gamma[j] * x[j] + (1 + lam1) * gamma[u] * x[u])
        mu1 += term
        mu2 += 4 * h[j] * (1 + lam1) * lam4 * p * a * gamma[u] * W * x[u] + term * term
        mu3 += 2 * h[j] * lam4 * p * x[u]
    return QuadCoeffs(float(mu1), float(mu2), float(mu3))


# ---------------------------------------------------------------------------
# polynomial roots
# ---------------------------------------------------------------------------

@njit(cache=True)
def _horner(c, r):
    value = 0.0
    deriv = 0.0
    for i in range(c.size):
        deriv = deriv * r + value
        value = value * r + c[i]
    return value, deriv


@njit(cache=True)
def _two_sum(a, b):
    s = a + b
    z = s - a
    return s, (a - (s - z)) + (b - z)


@njit(cache=True)
def _two_prod(a, b):
    p = a * b
    split = 134217729.0     # 2**27 + 1 (Dekker)
    t = split * a
    ah = t - (t - a)
    al = a - ah
    t = split * b
    bh = t - (t - b)
    bl = b - bh
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


@njit(cache=True)
def _comp_horner(c, r):
    """Polynomial value as accurate as Horner's rule in twice the working precision."""
    s = c[0]
    err = 0.0
    for i in range(1, c.size):
        p, pe = _two_prod(s, r)
        s, se = _two_sum(p, c[i])
        err = err * r + (pe + se)
    return s + err


@njit(cache=True)
def _polish(c, r):
    """Newton steps on the accurate residual, then descent over neighbouring doubles."""
    value = _comp_horner(c, r)
    for _ in range(4):
        if value == 0.0:
            return r
        _, deriv = _horner(c, r)
        if deriv == 0.0:
            break
        step = value / deriv
        if not np.isfinite(step) or abs(step) > 1e-3 * max(1.0, abs(r)):
            break
        trial = r - step
        tv = _comp_horner(c, trial)
        if abs(tv) >= abs(value):
            break
        r, value = trial, tv
    for direction in (np.inf, -np.inf):
        for _ in range(64):
            trial = np.nextafter(r, direction)
            tv = _comp_horner(c, trial)
            if abs(tv) >= abs(value):
                break
            r, value = trial, tv
    return r


@njit(cache=True)
def _roots_kernel(coeffs, imag_tol):
    """Sorted real roots, highest degree first; empty for constants."""
    scale = 0.0
    for v in coeffs:
        scale = max(scale, abs(v))
    first = 0
    while first < coeffs.size and abs(coeffs[first]) <= 1e-14 * scale:
        first += 1
    c = coeffs[first:] / scale
    deg = c.size - 1
    out = np.empty(max(deg, 0))
    if deg <= 0:
        return out
    if deg == 1:
        out[0] = -c[1] / c[0]
        return out
    companion = np.zeros((deg, deg), dtype=np.complex128)
    for i in range(deg):
        companion[0, i] = -c[i + 1] / c[0]
    for i in range(1, deg):
        companion[i, i - 1] = 1.0
    eig = np.linalg.eigvals(companion)
    count = 0
    for z in eig:
        if abs(z.imag) > imag_tol * max(1.0, abs(z.real)):
            continue
        r = _polish(coeffs, z.real)   # residual of the caller's coefficients
        out[count] = r
        count += 1
    return np.sort(out[:count])


def real_roots(coeffs, imag_tol=ROOT_IMAG_TOL):
    """Real roots of a polynomial given highest-degree coefficient first.

    Companion-matrix eigenvalues, each real root polished by Newton steps
    and a walk over neighbouring doubles, both kept only while they reduce
    the (compensated) residual. Leading coefficients
    that are zero relative to the largest drop the degree. Raises
    :class:`KKTError` for the identically-zero polynomial.
    """
    c = np.asarray(coeffs, dtype=float)
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0 or not np.isfinite(scale):
        raise KKTError("polynomial is identically zero or non-finite")
    return [float(r) for r in _roots_kernel(np.ascontiguousarray(c), imag_tol)]


def solve_cubic(coeffs):
    """All real roots of ``t3 p^3 + t2 p^2 + t1 p + t0``.

    Accepts a :class:`CubicCoeffs` or a 4-sequence. A vanishing leading
    coefficient falls through to the quadratic / linear case.
    """
    if isinstance(coeffs, CubicCoeffs):
        coeffs = coeffs.as_array()
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (4,):
        raise KKTError("a cubic needs exactly four coefficients")
    roots = real_roots(coeffs)
    # collapse numerically repeated roots (e.g. a double root split by rounding)
    merged = []
    for r in roots:
        if merged and abs(r - merged[-1]) <= 1e-7 * max(1.0, abs(r)):
            continue
        merged.append(r)
    return merged


def select_power_root(roots, objective, p_max):
    """Pick the power among ``roots in (0, p_max]``, ``p_max`` and ``0``.

    ``objective`` maps a power to the per-slot surrogate Lagrangian value.
    The best candidate wins; exact ties go to the smaller power.
    """
    if p_max <= 0:
        return 0.0
    candidates = sorted({0.0, float(p_max)} | {float(r) for r in roots if 0 < r <= p_max})
    best_p, best_val = None, -math.inf
    for p in candidates:
        val = objective(p)
        if best_p is None or val > best_val:
            best_p, best_val = p, val
    return best_p


# ---------------------------------------------------------------------------
# split closed forms
# ---------------------------------------------------------------------------

@njit(cache=True)
def _eta_root(mu1, mu2, mu3):
    """Branch choice of :func:`solve_eta`; NaN when no real split exists."""
    if not (mu3 != 0.0 and mu2 >= 0.0):
        return np.nan
    root = math.sqrt(mu2)
    a = (mu1 + root) / mu3
    b = (mu1 - root) / mu3
    top = max(a, b)
    bottom = min(a, b)
    if 0.0 <= top <= 1.0:
        return top
    if 0.0 <= bottom <= 1.0:
        return bottom
    return min(max(top, 0.0), 1.0)


def solve_eta(coeffs):
    """Private split from ``(mu1 +- sqrt(mu2)) / mu3``.

    Returns ``(eta, clamped)``. A branch inside [0, 1] is preferred (the
    larger if both are); otherwise the larger branch is clamped into [0, 1]
    and ``clamped`` is True. Raises :class:`KKTError` when ``mu2 < 0`` or
    ``mu3 == 0`` so the caller can fall back.
    """
    if coeffs.mu3 == 0 or not coeffs.mu2 >= 0:
        raise KKTError("no real split from the quadratic")
    root = math.sqrt(coeffs.mu2)
    branches = ((coeffs.mu1 + root) / coeffs.mu3, (coeffs.mu1 - root) / coeffs.mu3)
    clamped = not any(0.0 <= b <= 1.0 for b in branches)
    return float(_eta_root(coeffs.mu1, coeffs.mu2, coeffs.mu3)), clamped


def solve_eta0(lam2, lam4, gamma_c, bandwidth):
    """Common split ``clamp(lam2 * gamma_c * W / lam4, 0, 1)``.

    ``gamma_c`` is the slope weight of the common-rate surrogate. Returns
    ``None`` when ``lam4`` is below the floor (closed form undefined).
    """
    if lam4 < LAMBDA4_FLOOR:
        return None
    return min(max(lam2 * gamma_c * bandwidth / lam4, 0.0), 1.0)


def project_splits(eta0, eta):
    """Rescale ``eta0`` and the private splits when their sum exceeds one."""
    total = eta0 + np.sum(eta, axis=-1)
    scale = np.where(total > 1.0, 1.0 / np.where(total > 0, total, 1.0), 1.0)
    return eta0 * scale, eta * scale[..., None]


@njit(cache=True)
def _project_row(v, cap):
    """In-place projection of a nonnegative row onto ``{sum(v) <= cap}``."""
    total = 0.0
    for x in v:
        total += x
    if total <= cap:
        return
    s = -np.sort(-v)
    css = 0.0
    theta = s[0]
    for i in range(s.size):
        css += s[i]
        t = (css - cap) / (i + 1)
        if s[i] - t > 0:
            theta = t
    for i in range(v.size):
        v[i] = max(v[i] - theta, 0.0)


def simplex_projection(v, cap=1.0):
    """Euclidean projection of ``v`` onto ``{v >= 0, sum(v) <= cap}``.

    ``v`` may be a matrix; each row is projected onto its own ``cap``.
    """
    v = np.maximum(np.asarray(v, dtype=float), 0.0)
    rows = np.atleast_2d(v)
    caps = np.broadcast_to(np.maximum(np.asarray(cap, dtype=float), 0.0), rows.shape[:1])
    out = rows.copy()
    for i in range(rows.shape[0]):
        _project_row(out[i], caps[i])
    return out.reshape(v.shape)


# ---------------------------------------------------------------------------
# per-slot kernels
# ---------------------------------------------------------------------------
# Arguments are the rows of one slot; ``n`` is its user count (the first
# ``n`` columns are real users, the rest padding).

@njit(cache=True)
def slot_power_poly(h, base, eta, n, w, wc, price, hc, ref_c):
    """Ascending coefficients of ``N(p) = kappa' p P - sum_u w_u A_u P_u - w_c P``.

    ``P = prod_u (A_u + B_u p)`` with ``A_u = I_p + sigma^2`` and
    ``B_u = h_u sum_{j != u} eta_j``; ``P_u`` omits factor ``u`` and
    ``kappa'`` adds the common tangent slope to the price. ``N < 0`` exactly
    where the surrogate Lagrangian increases in ``p``.
    """
    total = 0.0
    for i in range(n):
        total += eta[i]
    kappa = price + (wc * hc * total / ref_c if ref_c > 0 else 0.0)
    full = np.zeros(n + 1)
    full[0] = 1.0
    for v in range(n):
        b = h[v] * (total - eta[v])
        for d in range(v + 1, 0, -1):
            full[d] = full[d] * base[v] + full[d - 1] * b
        full[0] *= base[v]
    out = np.zeros(n + 2)
    for d in range(n + 1):
        out[d + 1] += kappa * full[d]
        out[d] -= wc * full[d]
    for u in range(n):
        if w[u] == 0.0:
            continue
        part = np.zeros(n)
        part[0] = 1.0
        deg = 0
        for v in range(n):
            if v == u:
                continue
            b = h[v] * (total - eta[v])
            for d in range(deg + 1, 0, -1):
                part[d] = part[d] * base[v] + part[d - 1] * b
            part[0] *= base[v]
            deg += 1
        for d in range(n):
            out[d] -= w[u] * base[u] * part[d]
    return out


@njit(cache=True)
def slot_rates(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc, base_c, ref_c, p, priv):
    """Surrogate private rates (into ``priv``) and the common rate (returned).

    A term with a dead expansion point (``tau == 0``) contributes its
    constant ``omega`` (zero); a live term at zero SINR gives ``-inf``.
    """
    total = 0.0
    for i in range(n):
        total += eta[i]
    for i in range(n):
        if tau[i] > 0.0:
            rx = h[i] * p
            num = rx * eta[i]
            if num <= 0.0:
                priv[i] = -np.inf
            else:
                priv[i] = tau[i] * (math.log2(num) - math.log2(base[i] + rx * (total - eta[i]))) + omega[i]
        else:
            priv[i] = omega[i]
    if tau_c > 0.0:
        num = hc * eta0 * p
        if num <= 0.0:
            return -np.inf
        dc = base_c + hc * p * total
        return tau_c * (math.log2(num) - math.log2(ref_c) - (dc - ref_c) / (ref_c * LN2)) + omega_c
    return omega_c


@njit(cache=True)
def slot_objective(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc, base_c, ref_c,
                   lam1, lam2, price, p, scratch):
    """Power-dependent part of the slot's surrogate Lagrangian.

    Terms whose stream carries no power share (``eta == 0``) equal ``-inf``
    for every ``p``; they do not depend on the power and are left out.
    """
    common = slot_rates(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc, base_c, ref_c,
                        p, scratch)
    val = -price * p
    for i in range(n):
        if eta[i] * h[i] > 0.0:
            val += (1.0 + lam1[i]) * scratch[i]
    if lam2 > 0.0 and eta0 * hc > 0.0:
        val += lam2 * common
    if np.isnan(val):
        return -np.inf
    return val


@njit(cache=True)
def slot_best_power(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc, base_c, ref_c,
                    lam1, lam2, price, p_max):
    """Power step: best of ``0``, ``p_max`` and the stationary roots inside."""
    if not p_max > 0.0:
        return 0.0
    w = np.zeros(n)
    for i in range(n):
        if eta[i] * h[i] > 0.0:
            w[i] = (1.0 + lam1[i]) * tau[i] / LN2
    wc = lam2 * tau_c / LN2 if eta0 * hc > 0.0 else 0.0
    poly = slot_power_poly(h, base, eta, n, w, wc, price, hc, ref_c)
    scratch = np.empty(n)
    best_p = 0.0
    best = slot_objective(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc, base_c, ref_c,
                          lam1, lam2, price, 0.0, scratch)
    nonzero = False
    for v in poly:
        if v != 0.0:
            nonzero = True
    if nonzero:
        roots = _roots_kernel(poly[::-1].copy(), ROOT_IMAG_TOL)
        for r in roots:   # ascending, so ties keep the smaller power
            if 0.0 < r < p_max:
                val = slot_objective(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc,
                                     base_c, ref_c, lam1, lam2, price, r, scratch)
                if val > best:
                    best, best_p = val, r
    val = slot_objective(h, base, eta, eta0, n, tau, omega, tau_c, omega_c, hc, base_c, ref_c,
                         lam1, lam2, price, p_max, scratch)
    if val > best:
        best_p = p_max
    return best_p


@njit(cache=True)
def slot_eta_quad(h, base, eta, n, w, lam4e, p, mu1, mu2, mu3):
    """Quadratic coefficients of every private split (written into ``mu*``).

    For user ``u`` and each co-slot user ``j`` with ``h_j p > 0``:

        m_j   = (w_u - w_j) h_j p - lam4' A'_j
        mu1  += m_j
        mu2  += m_j^2 + 4 lam4' h_j p w_u A'_j
        mu3  += 2 lam4' h_j p

    ``A'_j`` is user ``j``'s noise plus interference from streams other
    than ``u``. With two users this is the exact stationarity condition; a
    user without interferers gets ``eta = w_u / lam4'``, encoded as
    ``(w_u, 0, lam4')``.
    """
    total = 0.0
    for i in range(n):
        total += eta[i]
    for u in range(n):
        a1 = 0.0
        a2 = 0.0
        a3 = 0.0
        for j in range(n):
            if j == u:
                continue
            hp = h[j] * p
            if not hp > 0.0:
                continue
            a_j = base[j] + hp * (total - eta[j] - eta[u])
            m = (w[u] - w[j]) * hp - lam4e * a_j
            a1 += m
            a2 += m * m + 4.0 * lam4e * hp * w[u] * a_j
            a3 += 2.0 * lam4e * hp
        if a3 == 0.0:
            a1, a2, a3 = w[u], 0.0, lam4e
        mu1[u], mu2[u], mu3[u] = a1, a2, a3


# ---------------------------------------------------------------------------
# batched slot data
# ---------------------------------------------------------------------------

@dataclass
class SlotBatch:
    """Active slots of one scenario with the SCA expansion frozen.

    Arrays are ``(S,)`` per slot or ``(S, n)`` per user column; each slot's
    users occupy its first ``counts[s]`` columns, padded columns have
    ``mask == False``, ``h == 0`` and ``base == 1``.
    """

    slots: list
    users: np.ndarray
    mask: np.ndarray
    h: np.ndarray
    base: np.ndarray      # I_p + sigma^2 per user
    f: np.ndarray
    gamma: np.ndarray     # private SINR at the expansion point
    tau: np.ndarray
    omega: np.ndarray
    gamma_c: np.ndarray   # min common SINR at the expansion point
    tau_c: np.ndarray
    omega_c: np.ndarray
    hc: np.ndarray        # gain of the min-SINR user
    base_c: np.ndarray
    ref_c: np.ndarray     # common denominator at the expansion point

    @property
    def size(self):
        return len(self.slots)

    @property
    def width(self):
        return self.mask.shape[1]

    @property
    def counts(self):
        return self.mask.sum(axis=1)


def layout(assignment):
    """Active slots and padded user table of an assignment."""
    slots = assignment.active_slots()
    groups = [assignment.users_in(m, k) for m, k in slots]
    width = max((g.size for g in groups), default=1)
    users = np.zeros((len(slots), width), dtype=np.int64)
    mask = np.zeros((len(slots), width), dtype=bool)
    for s, g in enumerate(groups):
        users[s, :g.size] = g
        mask[s, :g.size] = True
    return slots, users, mask


def gather(slots, users, mask, tensor):
    """Pick ``tensor[m, u, k]`` for every slot/user column (0 on padding)."""
    if not slots:
        return np.zeros(users.shape)
    ms = np.array([m for m, _ in slots])[:, None]
    ks = np.array([k for _, k in slots])[:, None]
    return np.where(mask, tensor[ms, users, ks], 0.0)


def slot_sinrs(h, base, mask, p, eta0, eta):
    """Private and common SINR per user column at ``(p, eta0, eta)``."""
    total = np.sum(eta * mask, axis=-1, keepdims=True)
    rx = h * p[..., None]
    private = np.where(mask, rx * eta / (base + rx * (total - eta)), 0.0)
    common = np.where(mask, rx * eta0[..., None] / (base + rx * total), np.inf)
    return private, common


def expand(slots, users, mask, h, base, f, p, eta0, eta):
    """Freeze the SCA expansion of every rate term at ``(p, eta0, eta)``."""
    private, common = slot_sinrs(h, base, mask, p, eta0, eta)
    tau, omega = coeffs_array(private)
    rows = np.arange(len(slots))
    idx = np.argmin(common, axis=1) if len(slots) else np.zeros(0, dtype=int)
    gamma_c = common[rows, idx] if len(slots) else np.zeros(0)
    gamma_c = np.where(np.isfinite(gamma_c), gamma_c, 0.0)
    tau_c, omega_c = coeffs_array(gamma_c)
    hc = h[rows, idx] if len(slots) else np.zeros(0)
    base_c = base[rows, idx] if len(slots) else np.zeros(0)
    ref_c = base_c + hc * p * np.sum(eta * mask, axis=1)
    return SlotBatch(slots, users, mask, h, base, f, private, tau, omega,
                     gamma_c, tau_c, omega_c, hc, base_c, ref_c)


@dataclass
class SlotDuals:
    """Multipliers seen by each slot: ``lam1`` per user column, the rest per slot."""

    lam1: np.ndarray    # (S, n)
    lam2: np.ndarray    # (S,)
    lam4: np.ndarray    # (S,)
    price: np.ndarray   # (S,) lam3 * f + lam5


def weights(batch, duals):
    """Private and common surrogate weights (natural-log slopes)."""
    w = np.where(batch.mask, (1.0 + duals.lam1) * batch.tau / LN2, 0.0)
    wc = duals.lam2 * batch.tau_c / LN2
    return w, wc


def effective_lambda4(batch, duals, p):
    """``lam4`` plus the slope of the common tangent in the private splits."""
    _, wc = weights(batch, duals)
    return duals.lam4 + wc * batch.hc * p / batch.ref_c


def surrogate_rates(batch, p, eta0, eta):
    """Surrogate private ``(S, n)`` and common ``(S,)`` spectral efficiencies."""
    counts = batch.counts
    priv = np.zeros(batch.h.shape)
    common = np.zeros(batch.size)
    for s in range(batch.size):
        common[s] = slot_rates(batch.h[s], batch.base[s], eta[s], eta0[s], counts[s],
                               batch.tau[s], batch.omega[s], batch.tau_c[s], batch.omega_c[s],
                               batch.hc[s], batch.base_c[s], batch.ref_c[s], p[s], priv[s])
    return priv, common


def power_objective(batch, duals, p, eta0, eta):
    """Per-slot surrogate Lagrangian terms that depend on the power.

    ``p`` has shape ``(S, C)`` (``C`` candidates per slot); returns ``(S, C)``.
    """
    p = np.asarray(p, dtype=float).reshape(batch.size, -1)
    counts = batch.counts
    out = np.empty(p.shape)
    for s in range(batch.size):
        scratch = np.empty(counts[s])
        for i, value in enumerate(p[s]):
            out[s, i] = slot_objective(batch.h[s], batch.base[s], eta[s], eta0[s], counts[s],
                                       batch.tau[s], batch.omega[s], batch.tau_c[s],
                                       batch.omega_c[s], batch.hc[s], batch.base_c[s],
                                       batch.ref_c[s], duals.lam1[s], duals.lam2[s],
                                       duals.price[s], value, scratch)
    return out


def power_poly(batch, duals, eta):
    """Stationarity polynomial of every slot, ascending coefficients ``(S, n + 2)``.

    Slots with fewer users than the widest one get zero leading coefficients.
    """
    w, wc = weights(batch, duals)
    counts = batch.counts
    out = np.zeros((batch.size, batch.width + 2))
    for s in range(batch.size):
        n = counts[s]
        out[s, :n + 2] = slot_power_poly(batch.h[s], batch.base[s], eta[s], n, w[s], wc[s],
                                         duals.price[s], batch.hc[s], batch.ref_c[s])
    return out


def best_power(batch, duals, eta0, eta, p_max):
    """Power step for every slot: stationary root or box end, whichever is best."""
    counts = batch.counts
    p_max = np.broadcast_to(np.asarray(p_max, dtype=float), (batch.size,))
    out = np.zeros(batch.size)
    for s in range(batch.size):
        out[s] = slot_best_power(batch.h[s], batch.base[s], eta[s], eta0[s], counts[s],
                                 batch.tau[s], batch.omega[s], batch.tau_c[s], batch.omega_c[s],
                                 batch.hc[s], batch.base_c[s], batch.ref_c[s], duals.lam1[s],
                                 duals.lam2[s], duals.price[s], p_max[s])
    return out


def eta_quad(batch, duals, p, eta):
    """Quadratic coefficients ``(mu1, mu2, mu3)`` of every private split, each ``(S, n)``."""
    w, _ = weights(batch, duals)
    lam4e = effective_lambda4(batch, duals, p)
    counts = batch.counts
    mu = np.zeros((3,) + batch.h.shape)
    for s in range(batch.size):
        slot_eta_quad(batch.h[s], batch.base[s], eta[s], counts[s], w[s], lam4e[s], p[s],
                      mu[0, s], mu[1, s], mu[2, s])
    return mu[0], mu[1], mu[2]


def eta_from_quad(mu1, mu2, mu3):
    """Vectorised :func:`solve_eta` (no exception; NaN where undefined)."""
    mu1, mu2, mu3 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (mu1, mu2, mu3)))
    out = np.empty(mu1.shape)
    for idx in np.ndindex(mu1.shape):
        out[idx] = _eta_root(mu1[idx], mu2[idx], mu3[idx])
    return out


# ---------------------------------------------------------------------------
# slot-level entry points on model objects
# ---------------------------------------------------------------------------

def slot_expansion(config, channels, assignment, alloc):
    """:class:`SlotBatch` of all active slots, expanded at ``alloc``."""
    slots, users, mask = layout(assignment)
    h = gather(slots, users, mask, channels.h)
    base = np.where(mask, gather(slots, users, mask, channels.ip) + config.noise_variance, 1.0)
    ms = np.array([m for m, _ in slots], dtype=int)
    ks = np.array([k for _, k in slots], dtype=int)
    eta = gather(slots, users, mask, alloc.eta)
    return expand(slots, users, mask, h, base, channels.f[ms, ks], alloc.p[ms, ks],
                  alloc.eta0[ms, ks], eta)


def _slot_view(config, channels, assignment, alloc, m, k):
    batch = slot_expansion(config, channels, assignment, alloc)
    if (m, k) not in batch.slots:
        raise KKTError(f"slot ({m}, {k}) has no users")
    s = batch.slots.index((m, k))
    return batch, s, int(batch.counts[s])


def cubic_coeffs(config, channels, duals, assignment, alloc, m, k):
    """Power polynomial of slot ``(m, k)`` with the expansion taken at ``alloc``.

    Multi-user slots return the printed coefficient sums, evaluated with
    slope weights ``gamma = tau / ln 2`` and the ``1 / W``-scaled multipliers
    (so ``bandwidth = 1``). A single-user slot has no pair terms; it gets the
    stationarity polynomial of its own Lagrangian (degree 2, ``t3 = 0``).
    """
    batch, s, n = _slot_view(config, channels, assignment, alloc, m, k)
    users = batch.users[s, :n]
    lam1 = np.asarray(duals.lambda1, float)[users]
    if n == 1:
        sd = SlotDuals(lam1[None, :], np.array([duals.lambda2[m, k]]), np.array([duals.lambda4[m, k]]),
                       np.array([duals.lambda3[m, k] * channels.f[m, k] + duals.lambda5]))
        one = _single(batch, s)
        eta = np.zeros((1, one.width))
        eta[0, 0] = alloc.eta[m, users[0], k]
        poly = power_poly(one, sd, eta)[0]
        return CubicCoeffs(0.0, float(poly[2]), float(poly[1]), float(poly[0]))
    return printed_cubic_coeffs(
        batch.h[s, :n], alloc.eta[m, users, k], np.ones(n), batch.base[s, :n] - config.noise_variance,
        config.noise_variance, batch.tau[s, :n] / LN2, batch.tau_c[s] / LN2, lam1,
        duals.lambda2[m, k], duals.lambda3[m, k], duals.lambda5, channels.f[m, k], 1.0)


def quad_coeffs(config, channels, duals, assignment, alloc, m, u, k):
    """Split quadratic of user ``u`` in slot ``(m, k)``; printed sums for shared slots.

    A user alone in its slot gets ``((1 + lam1) gamma, 0, lam4)``, i.e. the
    split ``(1 + lam1) gamma / lam4``. Raises :class:`KKTError` when
    ``lam4`` is below the floor (the quadratic is undefined).
    """
    lam4 = float(duals.lambda4[m, k])
    if lam4 < LAMBDA4_FLOOR:
        raise KKTError("lambda4 below the floor: split quadratic undefined")
    batch, s, n = _slot_view(config, channels, assignment, alloc, m, k)
    users = list(batch.users[s, :n])
    if u not in users:
        raise KKTError(f"user {u} is not served by slot ({m}, {k})")
    i = users.index(u)
    gamma = batch.tau[s, :n] / LN2
    lam1 = float(duals.lambda1[u])
    if n == 1:
        return QuadCoeffs((1.0 + lam1) * float(gamma[0]), 0.0, lam4)
    return printed_quad_coeffs(i, batch.h[s, :n], np.ones(n), batch.base[s, :n] - config.noise_variance,
                               config.noise_variance, gamma, lam1, lam4, float(alloc.p[m, k]), 1.0)


def _single(batch, s):
    """One-slot view of a batch."""
    pick = slice(s, s + 1)
    return SlotBatch([batch.slots[s]], batch.users[pick], batch.mask[pick], batch.h[pick],
                     batch.base[pick], batch.f[pick], batch.gamma[pick], batch.tau[pick],
                     batch.omega[pick], batch.gamma_c[pick], batch.tau_c[pick],
                     batch.omega_c[pick], batch.hc[pick], batch.base_c[pick], batch.ref_c[pick])
