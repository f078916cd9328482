"""Iterative solvers for the regularized linear subproblem.

Two solver families are provided for ``min ||A f - g||``:

* :func:`lsqr` -- the classic bidiagonalization least-squares recurrence of
  Paige & Saunders (TOMS 1982), run for a fixed iteration count with no
  explicit regularization. On noisy ill-posed data it semiconverges: the
  error dips and then grows as noise gets fitted.
* :func:`hybrid_lsqr` -- Golub-Kahan bidiagonalization with full
  reorthogonalization plus Tikhonov regularization applied to the small
  projected problem each iteration. The regularization parameter is chosen
  per iteration by a weighted-GCV rule in the style of HyBR (Chung, Nagy &
  O'Leary, ETNA 2008), by a fixed value, or -- for reference runs only -- by
  minimizing the error against a supplied ground truth.

Operators only need ``n_rows``, ``n_cols``, ``apply`` and ``apply_transpose``
(see :class:`MatrixOperator` for wrapping dense arrays).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MatrixOperator",
    "check_adjoint",
    "BidiagState",
    "bidiag_start",
    "golub_kahan_step",
    "bidiagonal_matrix",
    "projected_tikhonov",
    "wgcv_select",
    "lsqr",
    "hybrid_lsqr",
    "SolveReport",
]

BREAKDOWN_TOL = 1e-14

#: lambda search bracket, as multiples of ||g||
LAMBDA_BRACKET = (1e-10, 1e2)


class MatrixOperator:
    """Operator interface over a dense 2-d array (used in tests and oracles)."""

    def __init__(self, a):
        self.a = np.asarray(a, dtype=np.float64)
        if self.a.ndim != 2:
            raise ValueError("expected a 2-d array")

    @property
    def n_rows(self):
        return self.a.shape[0]

    @property
    def n_cols(self):
        return self.a.shape[1]

    def apply(self, x):
        return self.a @ x

    def apply_transpose(self, y):
        return self.a.T @ y


def check_adjoint(op, rng, n_trials=5):
    """Largest relative adjoint mismatch over random vector pairs.

    Returns ``max |<A x, y> - <x, A^T y>| / (||A x|| ||y||)``; a correct
    transpose keeps this at rounding level.
    """
    worst = 0.0
    for _ in range(n_trials):
        x = rng.standard_normal(op.n_cols)
        y = rng.standard_normal(op.n_rows)
        ax = op.apply(x)
        aty = op.apply_transpose(y)
        denom = np.linalg.norm(ax) * np.linalg.norm(y)
        if denom == 0.0:
            continue
        worst = max(worst, abs(ax @ y - x @ aty) / denom)
    return worst


# ---------------------------------------------------------------------------
# Golub-Kahan bidiagonalization


@dataclass
class BidiagState:
    """Partial factorization ``A V_k = U_{k+1} B_k`` after k steps.

    ``alphas[i]`` and ``betas[i]`` hold the diagonal and subdiagonal of the
    (k+1) x k bidiagonal matrix; column storage is preallocated to capacity.
    """

    k: int
    beta1: float
    u_store: np.ndarray
    v_store: np.ndarray
    alphas: list
    betas: list
    reorth: bool
    breakdown: bool = False
    breakdown_reason: str = ""

    @property
    def U(self):
        return self.u_store[:, : self.k + 1]

    @property
    def V(self):
        return self.v_store[:, : self.k]


def bidiag_start(op, g, capacity, reorth=True):
    """Initialize the factorization with ``u_1 = g / ||g||``."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (op.n_rows,):
        raise ValueError(f"expected right-hand side of length {op.n_rows}")
    beta1 = float(np.linalg.norm(g))
    u_store = np.zeros((op.n_rows, capacity + 1))
    v_store = np.zeros((op.n_cols, capacity))
    state = BidiagState(0, beta1, u_store, v_store, [], [], reorth)
    if beta1 == 0.0:
        state.breakdown = True
        state.breakdown_reason = "zero right-hand side"
    else:
        u_store[:, 0] = g / beta1
    return state


def _reorthogonalize(w, basis):
    # twice classical Gram-Schmidt
    if basis.shape[1]:
        w = w - basis @ (basis.T @ w)
        w = w - basis @ (basis.T @ w)
    return w


def golub_kahan_step(state, op, reorth=None):
    """Extend the factorization by one column (mutates and returns ``state``).

    A new coefficient below ``1e-14 * beta1`` signals breakdown: the state is
    flagged and no further columns should be requested, but everything built
    so far remains valid.
    """
    if state.breakdown:
        raise RuntimeError("cannot extend a broken-down factorization")
    if reorth is None:
        reorth = state.reorth
    k = state.k
    tol = BREAKDOWN_TOL * state.beta1

    w = op.apply_transpose(state.u_store[:, k])
    if k > 0:
        w = w - state.betas[k - 1] * state.v_store[:, k - 1]
    if reorth:
        w = _reorthogonalize(w, state.v_store[:, :k])
    alpha = float(np.linalg.norm(w))
    if alpha <= tol:
        state.breakdown = True
        state.breakdown_reason = f"alpha breakdown at step {k + 1}"
        return state
    state.v_store[:, k] = w / alpha
    state.alphas.append(alpha)

    w = op.apply(state.v_store[:, k]) - alpha * state.u_store[:, k]
    if reorth:
        w = _reorthogonalize(w, state.u_store[:, : k + 1])
    beta = float(np.linalg.norm(w))
    if beta <= tol:
        state.betas.append(0.0)
        state.breakdown = True
        state.breakdown_reason = f"beta breakdown at step {k + 1}"
    else:
        state.u_store[:, k + 1] = w / beta
        state.betas.append(beta)
    state.k = k + 1
    return state


def bidiagonal_matrix(state):
    """Dense (k+1) x k lower-bidiagonal matrix of the factorization."""
    k = state.k
    b = np.zeros((k + 1, k))
    for i in range(k):
        b[i, i] = state.alphas[i]
        b[i + 1, i] = state.betas[i]
    return b


# ---------------------------------------------------------------------------
# projected Tikhonov and weighted GCV


def _svd_filter_solve(s, bhat, qt, lam):
    """Solution of the projected Tikhonov problem from the SVD of B."""
    if lam < 0.0:
        raise ValueError("lambda must be nonnegative")
    k = qt.shape[0]
    if lam == 0.0:
        cutoff = (s.max(initial=0.0)) * max(qt.shape) * np.finfo(np.float64).eps
        filt = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    else:
        filt = s / (s * s + lam * lam)
    return qt.T @ (filt * bhat[:k])


def _svd_residual_sq(s, bhat, lam):
    """||B y(lambda) - beta1 e1||^2 from the SVD quantities."""
    k = len(s)
    if lam == 0.0:
        shrink = np.where(s > 0.0, 0.0, 1.0)
    else:
        shrink = lam * lam / (s * s + lam * lam)
    head = float(np.sum((shrink * bhat[:k]) ** 2))
    tail = float(np.sum(bhat[k:] ** 2))
    return head + tail


def projected_tikhonov(b_mat, beta1, lam):
    """Minimizer of ``||B y - beta1 e1||^2 + lam^2 ||y||^2`` via the SVD of B."""
    p, s, qt = np.linalg.svd(b_mat, full_matrices=True)
    bhat = beta1 * p[0, :]
    return _svd_filter_solve(s, bhat, qt, lam)


def _wgcv_value(s, bhat, k, lam, omega):
    phi = s * s / (s * s + lam * lam)
    resid2 = _svd_residual_sq(s, bhat, lam)
    denom = (k + 1) - omega * float(np.sum(phi))
    return k * resid2 / (denom * denom)


def _golden_min(fun, x_lo, x_hi, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = x_lo, x_hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = fun(c)
    fd = fun(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return 0.5 * (a + b)


def _bracketed_min(fun, lam_lo, lam_hi, n_coarse=61, rel_tol=1e-4):
    """Coarse log-grid scan followed by golden-section refinement.

    Returns ``(lam, value, flat)`` where ``flat`` reports that the function
    varied by less than 1e-12 relative over the whole bracket.
    """
    grid = np.geomspace(lam_lo, lam_hi, n_coarse)
    vals = np.array([fun(l) for l in grid])
    vmax = vals.max()
    flat = bool(vmax - vals.min() <= 1e-12 * max(vmax, 1e-300))
    j = int(np.argmin(vals))
    lo = grid[max(j - 1, 0)]
    hi = grid[min(j + 1, n_coarse - 1)]
    if hi > lo:
        x = _golden_min(lambda t: fun(math.exp(t)), math.log(lo), math.log(hi),
                        math.log1p(rel_tol))
        lam = math.exp(x)
        if fun(lam) <= vals[j]:
            return lam, fun(lam), flat
    return float(grid[j]), float(vals[j]), flat


def wgcv_select(b_mat, beta1, omega):
    """Weighted-GCV choice of the Tikhonov parameter for the projected problem.

    Minimizes ``G_w(lam) = k ||B y(lam) - beta1 e1||^2 / T(lam)^2`` with the
    weighted trace term ``T = (k+1) - w * sum_j s_j^2 / (s_j^2 + lam^2)``
    over ``lam in [1e-10, 1e2] * beta1`` (log-scale golden-section search
    seeded by a coarse scan). ``omega = 1`` is standard GCV.

    Returns ``(lam, gcv_value, flat)``; ``flat`` means the curve varied by
    less than 1e-12 relative over the bracket, so the minimizer is arbitrary
    and the caller should prefer its previous parameter.
    """
    if not (0.0 < omega <= 1.0):
        raise ValueError("omega must lie in (0, 1]")
    p, s, qt = np.linalg.svd(b_mat, full_matrices=True)
    bhat = beta1 * p[0, :]
    k = qt.shape[0]
    fun = lambda lam: _wgcv_value(s, bhat, k, lam, omega)
    return _bracketed_min(fun, LAMBDA_BRACKET[0] * beta1, LAMBDA_BRACKET[1] * beta1)


def _adaptive_omega(s, bhat, k):
    """Per-iteration weight for weighted GCV, following the HyBR recipe.

    Treats the smallest projected singular value as a stand-in for the
    optimal regularization parameter, sets the lambda-derivative of the GCV
    function to zero there, and solves for the weight that makes that
    stationarity hold. Clipped to (0, 1]; degenerate cases fall back to 1
    (standard GCV).
    """
    m = k + 1
    alpha = s[-1]
    t0 = float(np.sum(bhat[k:] ** 2))
    s2 = s * s
    alpha2 = alpha * alpha
    tt = 1.0 / (s2 + alpha2)
    t1 = float(np.sum(s2 * tt))
    t3 = float(np.sum((bhat[:k] * alpha * s) ** 2 * tt**3))
    t4 = float(np.sum((s * tt) ** 2))
    t5 = float(np.sum((alpha2 * bhat[:k] * tt) ** 2))
    v2 = float(np.sum((bhat[:k] * s) ** 2 * tt**3))
    denom = t1 * t3 + t4 * (t5 + t0)
    if not np.isfinite(denom) or denom <= 0.0:
        return 1.0
    omega = m * alpha2 * v2 / denom
    if not np.isfinite(omega) or omega <= 0.0:
        return 1.0
    return min(1.0, omega)


# ---------------------------------------------------------------------------
# reports


@dataclass
class SolveReport:
    """Per-iteration history and final iterate of a linear solve."""

    solution: np.ndarray
    residual_norms: np.ndarray
    solution_norms: np.ndarray
    lambdas: np.ndarray
    gcv_values: np.ndarray
    rel_errors: np.ndarray
    stop_reason: str
    notes: list = field(default_factory=list)

    @property
    def n_iters(self):
        return len(self.residual_norms)

    def final_lambda(self):
        return float(self.lambdas[-1]) if self.n_iters else math.nan

    def to_csv(self, path):
        """Columns: iter, residual_norm, solution_norm, lambda, gcv_value,
        rel_error. Missing quantities are left empty."""

        def cell(v):
            return "" if math.isnan(v) else repr(float(v))

        with open(path, "w", encoding="ascii") as fh:
            fh.write("iter,residual_norm,solution_norm,lambda,gcv_value,rel_error\n")
            for i in range(self.n_iters):
                fh.write(
                    f"{i + 1},{cell(self.residual_norms[i])},"
                    f"{cell(self.solution_norms[i])},{cell(self.lambdas[i])},"
                    f"{cell(self.gcv_values[i])},{cell(self.rel_errors[i])}\n"
                )


def _empty_report(n_cols, reason):
    empty = np.empty(0)
    return SolveReport(np.zeros(n_cols), empty, empty, empty, empty, empty, reason)


# ---------------------------------------------------------------------------
# solvers


def lsqr(op, g, max_iter, truth=None):
    """Plain LSQR for ``min ||A f - g||``, run for ``max_iter`` iterations.

    No reorthogonalization and no regularization; the reported residual norm
    is the recurrence estimate (exact in exact arithmetic and nonincreasing).
    If ``truth`` is given, the relative error of every iterate is recorded,
    which is how semiconvergence is observed.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (op.n_rows,):
        raise ValueError(f"expected right-hand side of length {op.n_rows}")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    beta1 = float(np.linalg.norm(g))
    if beta1 == 0.0:
        return _empty_report(op.n_cols, "zero right-hand side")
    tol = BREAKDOWN_TOL * beta1
    u = g / beta1
    w = op.apply_transpose(u)
    alpha = float(np.linalg.norm(w))
    if alpha <= tol:
        return _empty_report(op.n_cols, "A^T g = 0: zero solution is optimal")
    v = w / alpha

    x = np.zeros(op.n_cols)
    wvec = v.copy()
    phibar = beta1
    rhobar = alpha
    resid = []
    solnorm = []
    relerr = []
    reason = "max_iter"
    for it in range(max_iter):
        u = op.apply(v) - alpha * u
        beta = float(np.linalg.norm(u))
        if beta > tol:
            u /= beta
            v = op.apply_transpose(u) - beta * v
            alpha = float(np.linalg.norm(v))
            if alpha > tol:
                v /= alpha
            else:
                alpha = 0.0
                v = np.zeros_like(v)
        else:
            # exact solution reached in the current subspace; finish the
            # update with a zero coefficient and stop afterwards
            beta = 0.0
            alpha = 0.0
            u = np.zeros_like(u)
            v = np.zeros_like(v)

        rho = math.hypot(rhobar, beta)
        c = rhobar / rho
        s = beta / rho
        theta = s * alpha
        rhobar = -c * alpha
        phi = c * phibar
        phibar = s * phibar

        x = x + (phi / rho) * wvec
        wvec = v - (theta / rho) * wvec

        resid.append(phibar)
        solnorm.append(float(np.linalg.norm(x)))
        relerr.append(
            float(np.linalg.norm(x - truth) / np.linalg.norm(truth))
            if truth is not None
            else math.nan
        )
        if beta == 0.0 or alpha == 0.0:
            reason = f"breakdown at iteration {it + 1}"
            break

    n = len(resid)
    nans = np.full(n, math.nan)
    return SolveReport(
        x,
        np.asarray(resid),
        np.asarray(solnorm),
        nans,
        nans.copy(),
        np.asarray(relerr) if truth is not None else nans.copy(),
        reason,
    )


def hybrid_lsqr(
    op,
    g,
    max_iter,
    strategy="wgcv",
    lam=None,
    truth=None,
    reorth=True,
    omega=1.0,
    stop_on_flat_gcv=False,
):
    """Hybrid LSQR: bidiagonalize, then Tikhonov-solve the projected problem.

    Parameters
    ----------
    strategy : {"wgcv", "fixed", "optimal"}
        How the regularization parameter is chosen at each iteration.
        ``"fixed"`` requires ``lam`` (with ``lam = 0`` this reproduces plain
        LSQR iterates on well-conditioned problems). ``"optimal"`` requires
        ``truth`` and picks the error-minimizing parameter -- unobtainable in
        practice, useful as a reference.
    omega : float or "adaptive"
        Weight of the GCV criterion (wgcv strategy only). The default 1.0 is
        standard GCV on the projected problem, which keeps the selected
        parameter stable through late iterations on this package's projection
        problems. ``"adaptive"`` enables the running-mean schedule of
        :func:`_adaptive_omega`; on these problems it settles well below 1
        and under-regularizes, so it is opt-in.
    reorth : bool
        Full reorthogonalization (twice classical Gram-Schmidt) of both
        Krylov bases; on by default since ill-posed problems lose
        orthogonality quickly and the iteration counts here are modest.
    stop_on_flat_gcv : bool
        Optionally stop early (wgcv strategy only) once the GCV curve is flat
        to 1e-12 relative across the whole search bracket; a degenerate-case
        guard, off by default so runs use the full iteration budget.

    The subspaces do not depend on the selected parameters, so per-iteration
    reconstructions are exactly the Tikhonov solutions restricted to the
    current subspace.
    """
    if strategy not in ("wgcv", "fixed", "optimal"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "fixed" and lam is None:
        raise ValueError("fixed strategy requires lam")
    if strategy == "optimal" and truth is None:
        raise ValueError("optimal strategy requires truth")
    if omega != "adaptive" and not (0.0 < float(omega) <= 1.0):
        raise ValueError("omega must be 'adaptive' or lie in (0, 1]")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")

    g = np.asarray(g, dtype=np.float64)
    state = bidiag_start(op, g, capacity=max_iter, reorth=reorth)
    if state.breakdown:
        return _empty_report(op.n_cols, state.breakdown_reason)
    truth_norm_sq = float(truth @ truth) if truth is not None else 0.0

    omegas = []
    lam_prev = None
    notes = []
    resid = []
    solnorm = []
    lams = []
    gcvs = []
    relerr = []
    f = np.zeros(op.n_cols)
    reason = "max_iter"
    for it in range(max_iter):
        golub_kahan_step(state, op)
        if state.k == it:  # alpha breakdown: no new column was produced
            reason = state.breakdown_reason
            break
        b_mat = bidiagonal_matrix(state)
        p, s, qt = np.linalg.svd(b_mat, full_matrices=True)
        bhat = state.beta1 * p[0, :]
        k = state.k

        gcv_val = math.nan
        if strategy == "fixed":
            lam_k = float(lam)
        elif strategy == "wgcv":
            if omega == "adaptive":
                omegas.append(_adaptive_omega(s, bhat, k))
                omega_k = float(np.mean(omegas))
            else:
                omega_k = float(omega)
            fun = lambda l: _wgcv_value(s, bhat, k, l, omega_k)
            lam_k, gcv_val, flat = _bracketed_min(
                fun, LAMBDA_BRACKET[0] * state.beta1, LAMBDA_BRACKET[1] * state.beta1
            )
            if flat:
                notes.append((it + 1, "flat GCV curve; kept previous lambda"))
                if lam_prev is not None:
                    lam_k = lam_prev
                    gcv_val = fun(lam_k)
                if stop_on_flat_gcv:
                    state.breakdown = True
                    state.breakdown_reason = f"flat GCV curve at iteration {it + 1}"
        else:  # optimal
            t_k = state.V.T @ truth
            ortho_sq = max(truth_norm_sq - float(t_k @ t_k), 0.0)

            def err(l):
                y = _svd_filter_solve(s, bhat, qt, l)
                d = y - t_k
                return math.sqrt(float(d @ d) + ortho_sq)

            lam_k, _, _ = _bracketed_min(
                err, LAMBDA_BRACKET[0] * state.beta1, LAMBDA_BRACKET[1] * state.beta1
            )

        y = _svd_filter_solve(s, bhat, qt, lam_k)
        f = state.V @ y
        resid.append(math.sqrt(_svd_residual_sq(s, bhat, lam_k)))
        solnorm.append(float(np.linalg.norm(f)))
        lams.append(lam_k)
        gcvs.append(gcv_val)
        relerr.append(
            float(np.linalg.norm(f - truth) / np.linalg.norm(truth))
            if truth is not None
            else math.nan
        )
        lam_prev = lam_k
        if state.breakdown:
            reason = state.breakdown_reason
            break

    return SolveReport(
        f,
        np.asarray(resid),
        np.asarray(solnorm),
        np.asarray(lams),
        np.asarray(gcvs),
        np.asarray(relerr),
        reason,
        notes,
    )
