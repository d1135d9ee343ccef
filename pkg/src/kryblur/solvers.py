"""Krylov solvers for ill-posed deblurring systems.

All solvers start from the zero vector, run at most ``max_iter`` steps, and
rely on early termination (discrepancy principle) rather than convergence:
on noisy data the error semi-converges, so the iteration count is the
regularization parameter.

Implemented methods:

* ``minres``          Lanczos three-term recurrence with Givens updates, for
  symmetric (possibly indefinite) maps such as the flip-symmetrized blur;
* ``minres_sym_prec`` MINRES on the two-sided symmetrically preconditioned
  system, reporting residuals of the original system;
* ``gmres``           full (non-restarted) Arnoldi with modified Gram-Schmidt
  plus one reorthogonalization pass, optional stationary right
  preconditioner;
* ``fgmres``          flexible Arnoldi: the preconditioner may change every
  iteration, the preconditioned directions are stored;
* ``lsqr``            Golub-Kahan bidiagonalization (no reorthogonalization),
  needs the adjoint; one iteration costs two operator applications;
* ``flsqr``           flexible Golub-Kahan with iteration-dependent right
  preconditioning and full orthogonalization of both bases.

Each run returns a :class:`SolveRecord` with per-iteration true residual
norms, recurrence (projected) residual norms, and error metrics when the
ground truth is available.  ``n_ops`` counts the operator applications
consumed by the iteration loop itself (forward plus adjoint); diagnostic
residual evaluations and the MINRES symmetry probe are not charged to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import psnr as _psnr
from .metrics import rre as _rre

__all__ = [
    "LinearMap",
    "StoppingRule",
    "SolveRecord",
    "minres",
    "minres_sym_prec",
    "gmres",
    "fgmres",
    "lsqr",
    "flsqr",
    "discrepancy_stop",
]

#: A candidate basis vector with norm below this times ||b|| ends the
#: iteration (Lanczos/Arnoldi/Golub-Kahan breakdown, including the happy
#: exact-solve kind).
BREAKDOWN_RTOL = 1e-14

_SYMMETRY_RTOL = 1e-8


class LinearMap:
    """A square linear operator given by callables on flat vectors."""

    def __init__(self, size: int, apply, apply_adjoint=None):
        self.size = int(size)
        self._apply = apply
        self._apply_adjoint = apply_adjoint

    def apply(self, x):
        return self._apply(x)

    def apply_adjoint(self, y):
        if self._apply_adjoint is None:
            raise ValueError("this linear map was built without an adjoint")
        return self._apply_adjoint(y)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "LinearMap":
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"need a square matrix, got shape {m.shape}")
        return cls(m.shape[0], lambda x: m @ x, lambda y: m.T @ y)


@dataclass(frozen=True)
class StoppingRule:
    """Iteration budget and optional discrepancy-principle stop.

    The discrepancy test fires at the first iterate whose residual norm is
    at most ``eta * noise_norm``.  With ``noise_norm == 0`` it can only fire
    at an exact solve.
    """

    max_iter: int = 100
    dp_enabled: bool = False
    eta: float = 1.01
    noise_norm: float | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.eta < 1.0:
            raise ValueError(f"eta must be at least 1, got {self.eta}")
        if self.dp_enabled:
            if self.noise_norm is None:
                raise ValueError("dp_enabled requires a noise_norm")
            if self.noise_norm < 0:
                raise ValueError(f"noise_norm must be nonnegative, got {self.noise_norm}")


def discrepancy_stop(residual_norm: float, rule: StoppingRule) -> bool:
    """True when the discrepancy principle says to stop."""
    if not rule.dp_enabled:
        raise ValueError("discrepancy_stop consulted with dp_enabled=False")
    return residual_norm <= rule.eta * rule.noise_norm


@dataclass
class SolveRecord:
    """Everything a run produced, one list entry per iteration."""

    res_norm: list[float] = field(default_factory=list)
    res_norm_projected: list[float] = field(default_factory=list)
    rre: list[float] | None = None
    psnr: list[float] | None = None
    alpha: list[float | None] = field(default_factory=list)
    stop_reason: str = "max_iter"
    best_index: int = 0
    x_stop: np.ndarray | None = None
    x_best: np.ndarray | None = None
    n_ops: int = 0
    skipped: list[int] = field(default_factory=list)
    iterates: list[np.ndarray] | None = None

    @property
    def iterations(self) -> int:
        return len(self.res_norm)


class _Counted:
    """Wraps an operator, counting loop applications for the work metric."""

    def __init__(self, op):
        self.op = op
        self.count = 0

    def apply(self, x):
        self.count += 1
        return self.op.apply(x)

    def apply_adjoint(self, y):
        self.count += 1
        return self.op.apply_adjoint(y)


class _History:
    """Per-iteration bookkeeping shared by all solvers."""

    def __init__(self, truth, keep_iterates):
        self.truth = None if truth is None else np.asarray(truth, float).ravel()
        self.res_norm: list[float] = []
        self.res_proj: list[float] = []
        self.rre: list[float] | None = [] if truth is not None else None
        self.psnr: list[float] | None = [] if truth is not None else None
        self.alpha: list[float | None] = []
        self.iterates: list[np.ndarray] | None = [] if keep_iterates else None
        self.best_index = 0
        self._best_key = math.inf
        self.x_best: np.ndarray | None = None

    def push(self, x, res_true, res_proj, alpha=None):
        self.res_norm.append(float(res_true))
        self.res_proj.append(float(res_proj))
        self.alpha.append(alpha)
        if self.truth is not None:
            self.rre.append(_rre(x, self.truth))
            self.psnr.append(_psnr(x, self.truth))
            key = self.rre[-1]
        else:
            key = float(res_true)
        if self.iterates is not None:
            self.iterates.append(np.array(x, copy=True))
        if key < self._best_key:
            self._best_key = key
            self.best_index = len(self.res_norm)
            self.x_best = np.array(x, copy=True)

    def record(self, reason, x_stop, n_ops, skipped=()) -> SolveRecord:
        x_stop = np.array(x_stop, copy=True)
        return SolveRecord(
            res_norm=self.res_norm,
            res_norm_projected=self.res_proj,
            rre=self.rre,
            psnr=self.psnr,
            alpha=self.alpha,
            stop_reason=reason,
            best_index=self.best_index,
            x_stop=x_stop,
            x_best=x_stop if self.x_best is None else self.x_best,
            n_ops=n_ops,
            skipped=list(skipped),
            iterates=self.iterates,
        )


def _flat(b, size, what="right-hand side"):
    b = np.asarray(b, dtype=float).ravel()
    if b.size != size:
        raise ValueError(f"{what} has {b.size} entries, operator expects {size}")
    return b


def _sym_ortho(a: float, b: float):
    """Stable Givens rotation: returns (r, c, s) with c*a + s*b = r and
    -s*a + c*b = 0."""
    if b == 0.0:
        return abs(a), (1.0 if a >= 0 else -1.0), 0.0
    if a == 0.0:
        return abs(b), 0.0, (1.0 if b >= 0 else -1.0)
    if abs(b) > abs(a):
        tau = a / b
        s = math.copysign(1.0, b) / math.sqrt(1.0 + tau * tau)
        c = s * tau
        return b / s, c, s
    tau = b / a
    c = math.copysign(1.0, a) / math.sqrt(1.0 + tau * tau)
    s = c * tau
    return a / c, c, s


def _probe_symmetry(op):
    """Check <Ax, y> == <x, Ay> on three seeded random pairs."""
    rng = np.random.default_rng(0x5EED)
    for _ in range(3):
        x = rng.standard_normal(op.size)
        y = rng.standard_normal(op.size)
        lhs = float(np.dot(np.ravel(op.apply(x)), y))
        rhs = float(np.dot(x, np.ravel(op.apply(y))))
        bound = _SYMMETRY_RTOL * np.linalg.norm(x) * np.linalg.norm(y)
        if abs(lhs - rhs) > bound:
            raise ValueError(
                "operator failed the symmetry probe: |<Ax,y> - <x,Ay>| = "
                f"{abs(lhs - rhs):.3e} > {bound:.3e}; MINRES needs a symmetric "
                "map (flip-symmetrize the blur first)"
            )


def _true_residual(op, b, x):
    return float(np.linalg.norm(b - np.ravel(op.apply(x))))


# ---------------------------------------------------------------------------
# MINRES
# ---------------------------------------------------------------------------

def _minres_loop(system, rhs, rule, history, *, to_solution, residual_op,
                 residual_rhs, alpha):
    counted = _Counted(system)
    beta1 = float(np.linalg.norm(rhs))
    if beta1 == 0.0:
        zero = np.zeros(system.size)
        return history.record("breakdown", zero, 0)
    tol_break = BREAKDOWN_RTOL * beta1
    v_prev = np.zeros(system.size)
    v = rhs / beta1
    d_prev = np.zeros(system.size)
    d_prev2 = np.zeros(system.size)
    x = np.zeros(system.size)
    phibar = beta1
    c_prev2, s_prev2 = 1.0, 0.0
    c_prev, s_prev = 1.0, 0.0
    beta = 0.0
    reason = "max_iter"
    for _ in range(rule.max_iter):
        w = np.ravel(counted.apply(v))
        alfa = float(np.dot(v, w))
        w = w - alfa * v - beta * v_prev
        beta_next = float(np.linalg.norm(w))
        # rotate the new tridiagonal column through the two stored rotations
        eps = s_prev2 * beta
        delta_tmp = c_prev2 * beta
        delta = c_prev * delta_tmp + s_prev * alfa
        gbar = -s_prev * delta_tmp + c_prev * alfa
        gamma, c, s = _sym_ortho(gbar, beta_next)
        if gamma == 0.0:
            reason = "breakdown"
            break
        tau = c * phibar
        phibar = -s * phibar
        d = (v - delta * d_prev - eps * d_prev2) / gamma
        x = x + tau * d
        d_prev2, d_prev = d_prev, d
        c_prev2, s_prev2 = c_prev, s_prev
        c_prev, s_prev = c, s
        sol = x if to_solution is None else to_solution(x)
        res_true = _true_residual(residual_op, residual_rhs, sol)
        history.push(sol, res_true, abs(phibar), alpha)
        if rule.dp_enabled and discrepancy_stop(res_true, rule):
            reason = "discrepancy"
            break
        if beta_next <= tol_break:
            reason = "breakdown"
            break
        v_prev, v = v, w / beta_next
        beta = beta_next
    x_stop = x if to_solution is None else to_solution(x)
    return history.record(reason, x_stop, counted.count)


def minres(A, b, rule: StoppingRule | None = None, x_true=None,
           keep_iterates: bool = False) -> SolveRecord:
    """MINRES on a symmetric map, from the zero initial guess.

    The map is probed for symmetry on three random vector pairs before any
    work is done; a non-symmetric map is rejected.
    """
    rule = rule or StoppingRule()
    b = _flat(b, A.size)
    _probe_symmetry(A)
    history = _History(x_true, keep_iterates)
    return _minres_loop(A, b, rule, history, to_solution=None,
                        residual_op=A, residual_rhs=b, alpha=None)


def minres_sym_prec(A, b, p_half, rule: StoppingRule | None = None,
                    x_true=None, keep_iterates: bool = False) -> SolveRecord:
    """MINRES on the symmetrically preconditioned system.

    Iterates on ``p_half A p_half z = p_half b`` and returns solutions
    ``x = p_half z``.  The recorded true residuals (and the discrepancy test)
    are those of the ORIGINAL system ``||b - A x||``; the projected residual
    series belongs to the preconditioned system.
    """
    rule = rule or StoppingRule()
    b = _flat(b, A.size)
    if p_half.size != A.size:
        raise ValueError(
            f"preconditioner size {p_half.size} does not match operator {A.size}"
        )
    system = LinearMap(
        A.size,
        lambda z: np.ravel(p_half.apply(np.ravel(A.apply(np.ravel(p_half.apply(z)))))),
    )
    _probe_symmetry(system)
    rhs = np.ravel(p_half.apply(b))
    history = _History(x_true, keep_iterates)
    return _minres_loop(
        system, rhs, rule, history,
        to_solution=lambda z: np.ravel(p_half.apply(z)),
        residual_op=A, residual_rhs=b,
        alpha=getattr(p_half, "alpha", None),
    )


# ---------------------------------------------------------------------------
# GMRES / FGMRES
# ---------------------------------------------------------------------------

class _HessenbergLS:
    """Incremental Givens QR of the small Hessenberg least-squares problem."""

    def __init__(self, beta: float, max_cols: int):
        self.r = np.zeros((max_cols + 1, max_cols))
        self.g = np.zeros(max_cols + 1)
        self.g[0] = beta
        self.cs: list[float] = []
        self.sn: list[float] = []
        self.k = 0

    def push_column(self, col: np.ndarray) -> float:
        """Add column k (entries for rows 0..k+1); returns the projected
        residual norm of the enlarged problem."""
        k = self.k
        col = np.asarray(col, dtype=float).copy()
        for i, (c, s) in enumerate(zip(self.cs, self.sn)):
            a, b = col[i], col[i + 1]
            col[i] = c * a + s * b
            col[i + 1] = -s * a + c * b
        rkk, c, s = _sym_ortho(col[k], col[k + 1])
        self.cs.append(c)
        self.sn.append(s)
        col[k] = rkk
        col[k + 1] = 0.0
        self.r[:k + 2, k] = col
        gk = self.g[k]
        self.g[k] = c * gk
        self.g[k + 1] = -s * gk
        self.k += 1
        return abs(self.g[self.k])

    def solve(self) -> np.ndarray:
        k = self.k
        r = self.r[:k, :k]
        try:
            return np.linalg.solve(r, self.g[:k])
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(r, self.g[:k], rcond=None)[0]


def _combine(basis, y):
    x = np.zeros_like(basis[0])
    for coeff, vec in zip(y, basis):
        x = x + coeff * vec
    return x


def _arnoldi_loop(A, b, rule, history, *, supplier, flexible):
    """Shared engine for plain GMRES and FGMRES.

    ``supplier(k, x_prev)`` returns the preconditioner for 0-based iteration
    k (flexible mode); plain mode passes no supplier.  With no
    preconditioning the two modes perform literally identical arithmetic,
    which is what the reduction tests pin down.
    """
    counted = _Counted(A)
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return history.record("breakdown", np.zeros(A.size), 0)
    tol_break = BREAKDOWN_RTOL * beta
    basis = [b / beta]
    directions = []          # preconditioned directions (flexible mode)
    ls = _HessenbergLS(beta, rule.max_iter)
    x = np.zeros(A.size)
    skipped: list[int] = []
    reason = "max_iter"
    for k in range(1, rule.max_iter + 1):
        v = basis[-1]
        alpha_k = None
        if flexible:
            prec = supplier(k - 1, x) if supplier is not None else None
            if prec is None:
                z = v
            else:
                z = np.ravel(prec.apply(v))
                alpha_k = getattr(prec, "alpha", None)
                if np.linalg.norm(z) <= tol_break:
                    # degenerate preconditioned direction (e.g. zero weights):
                    # skip it and fall back to the plain Arnoldi direction
                    skipped.append(k)
                    z = v
            directions.append(z)
        else:
            z = v
        w = np.ravel(counted.apply(z))
        col = np.zeros(k + 1)
        for i, vi in enumerate(basis):
            hi = float(np.dot(vi, w))
            w = w - hi * vi
            col[i] = hi
        for i, vi in enumerate(basis):      # one reorthogonalization pass
            corr = float(np.dot(vi, w))
            w = w - corr * vi
            col[i] += corr
        h_new = float(np.linalg.norm(w))
        col[k] = h_new
        proj = ls.push_column(col)
        y = ls.solve()
        x = _combine(directions if flexible else basis[:ls.k], y)
        res_true = _true_residual(A, b, x)
        history.push(x, res_true, proj, alpha_k)
        if rule.dp_enabled and discrepancy_stop(res_true, rule):
            reason = "discrepancy"
            break
        if h_new <= tol_break:
            reason = "breakdown"
            break
        basis.append(w / h_new)
    return history.record(reason, x, counted.count, skipped)


def gmres(A, b, rule: StoppingRule | None = None, right_prec=None,
          x_true=None, keep_iterates: bool = False) -> SolveRecord:
    """Full GMRES with an optional stationary right preconditioner.

    With right preconditioning the Arnoldi space is built for ``A P`` and the
    returned iterates are ``x = P u``; the recorded true residual is that of
    the given system, which right preconditioning leaves invariant.
    """
    rule = rule or StoppingRule()
    b = _flat(b, A.size)
    if right_prec is not None and right_prec.size != A.size:
        raise ValueError(
            f"preconditioner size {right_prec.size} does not match operator {A.size}"
        )
    history = _History(x_true, keep_iterates)
    if right_prec is None:
        return _arnoldi_loop(A, b, rule, history, supplier=None, flexible=False)
    return _arnoldi_right_prec(A, right_prec, b, rule, history)


def _arnoldi_right_prec(A, right_prec, b, rule, history):
    # classic right-preconditioned GMRES: same engine, composition handled
    # here so the work metric still counts applications of A alone
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        return history.record("breakdown", np.zeros(A.size), 0)
    counted = _Counted(A)
    tol_break = BREAKDOWN_RTOL * beta
    basis = [b / beta]
    ls = _HessenbergLS(beta, rule.max_iter)
    x = np.zeros(A.size)
    reason = "max_iter"
    alpha_k = getattr(right_prec, "alpha", None)
    for k in range(1, rule.max_iter + 1):
        z = np.ravel(right_prec.apply(basis[-1]))
        w = np.ravel(counted.apply(z))
        col = np.zeros(k + 1)
        for i, vi in enumerate(basis):
            hi = float(np.dot(vi, w))
            w = w - hi * vi
            col[i] = hi
        for i, vi in enumerate(basis):
            corr = float(np.dot(vi, w))
            w = w - corr * vi
            col[i] += corr
        h_new = float(np.linalg.norm(w))
        col[k] = h_new
        proj = ls.push_column(col)
        y = ls.solve()
        x = np.ravel(right_prec.apply(_combine(basis[:ls.k], y)))
        res_true = _true_residual(A, b, x)
        history.push(x, res_true, proj, alpha_k)
        if rule.dp_enabled and discrepancy_stop(res_true, rule):
            reason = "discrepancy"
            break
        if h_new <= tol_break:
            reason = "breakdown"
            break
        basis.append(w / h_new)
    return history.record(reason, x, counted.count)


def fgmres(A, b, prec_at=None, rule: StoppingRule | None = None, x_true=None,
           keep_iterates: bool = False) -> SolveRecord:
    """Flexible GMRES: ``prec_at(k, x_prev)`` supplies the preconditioner for
    0-based iteration k, given the previous solution estimate.

    The preconditioned directions are stored and combined directly, so the
    preconditioner may change freely.  A constant identity callback performs
    literally the same arithmetic as unpreconditioned :func:`gmres`.
    """
    rule = rule or StoppingRule()
    b = _flat(b, A.size)
    history = _History(x_true, keep_iterates)
    return _arnoldi_loop(A, b, rule, history, supplier=prec_at, flexible=True)


# ---------------------------------------------------------------------------
# LSQR / FLSQR
# ---------------------------------------------------------------------------

def lsqr(A, b, rule: StoppingRule | None = None, right_prec=None,
         x_true=None, keep_iterates: bool = False) -> SolveRecord:
    """LSQR via Golub-Kahan bidiagonalization, no reorthogonalization.

    Needs ``apply_adjoint`` on the operator (and on the right preconditioner
    if one is given).  One iteration consumes two operator applications.
    """
    rule = rule or StoppingRule()
    b = _flat(b, A.size)
    if right_prec is not None and right_prec.size != A.size:
        raise ValueError(
            f"preconditioner size {right_prec.size} does not match operator {A.size}"
        )
    counted = _Counted(A)
    history = _History(x_true, keep_iterates)

    def forward(vec):
        if right_prec is not None:
            vec = np.ravel(right_prec.apply(vec))
        return np.ravel(counted.apply(vec))

    def adjoint(vec):
        out = np.ravel(counted.apply_adjoint(vec))
        if right_prec is not None:
            out = np.ravel(right_prec.apply_adjoint(out))
        return out

    alpha_k = None if right_prec is None else getattr(right_prec, "alpha", None)
    beta1 = float(np.linalg.norm(b))
    if beta1 == 0.0:
        return history.record("breakdown", np.zeros(A.size), 0)
    tol_break = BREAKDOWN_RTOL * beta1
    u = b / beta1
    v = adjoint(u)
    alfa = float(np.linalg.norm(v))
    if alfa == 0.0:
        # b is orthogonal to the range: the zero vector already minimizes
        return history.record("breakdown", np.zeros(A.size), counted.count)
    v = v / alfa
    w = v.copy()
    z = np.zeros(A.size)
    phibar = beta1
    rhobar = alfa
    reason = "max_iter"
    for _ in range(rule.max_iter):
        u = forward(v) - alfa * u
        beta = float(np.linalg.norm(u))
        if beta > 0.0:
            u = u / beta
        if beta > tol_break:
            vnew = adjoint(u) - beta * v
            alfa = float(np.linalg.norm(vnew))
            if alfa > 0.0:
                vnew = vnew / alfa
        else:
            vnew, alfa = None, 0.0
        rho, c, s = _sym_ortho(rhobar, beta)
        theta = s * alfa
        rhobar = -c * alfa
        phi = c * phibar
        phibar = s * phibar
        z = z + (phi / rho) * w
        x = np.ravel(right_prec.apply(z)) if right_prec is not None else z
        res_true = _true_residual(A, b, x)
        history.push(x, res_true, abs(phibar), alpha_k)
        if rule.dp_enabled and discrepancy_stop(res_true, rule):
            reason = "discrepancy"
            break
        if beta <= tol_break or alfa <= tol_break:
            reason = "breakdown"
            break
        v = vnew
        w = v - (theta / rho) * w
    x_stop = np.ravel(right_prec.apply(z)) if right_prec is not None else z
    return history.record(reason, x_stop, counted.count)


def flsqr(A, b, prec_at=None, rule: StoppingRule | None = None, x_true=None,
          keep_iterates: bool = False) -> SolveRecord:
    """Flexible LSQR: Golub-Kahan with an iteration-dependent right
    preconditioner supplied by ``prec_at(k, x_prev)``.

    Both generated bases are kept orthonormal by single-pass modified
    Gram-Schmidt (flexibility breaks the bidiagonal short recurrence, so the
    projected problem is upper Hessenberg).  With a constant identity
    callback the projected problem is bidiagonal again and the method reduces
    to :func:`lsqr`.
    """
    rule = rule or StoppingRule()
    b = _flat(b, A.size)
    counted = _Counted(A)
    history = _History(x_true, keep_iterates)
    beta1 = float(np.linalg.norm(b))
    if beta1 == 0.0:
        return history.record("breakdown", np.zeros(A.size), 0)
    tol_break = BREAKDOWN_RTOL * beta1
    u_basis = [b / beta1]
    s0 = np.ravel(counted.apply_adjoint(u_basis[0]))
    alfa = float(np.linalg.norm(s0))
    if alfa == 0.0:
        return history.record("breakdown", np.zeros(A.size), counted.count)
    v_basis = [s0 / alfa]
    directions = []
    ls = _HessenbergLS(beta1, rule.max_iter)
    x = np.zeros(A.size)
    skipped: list[int] = []
    reason = "max_iter"
    for k in range(1, rule.max_iter + 1):
        v = v_basis[-1]
        alpha_k = None
        prec = prec_at(k - 1, x) if prec_at is not None else None
        if prec is None:
            zdir = v
        else:
            zdir = np.ravel(prec.apply(v))
            alpha_k = getattr(prec, "alpha", None)
            if np.linalg.norm(zdir) <= tol_break:
                skipped.append(k)
                zdir = v
        directions.append(zdir)
        w = np.ravel(counted.apply(zdir))
        col = np.zeros(k + 1)
        for i, ui in enumerate(u_basis):
            mi = float(np.dot(ui, w))
            w = w - mi * ui
            col[i] = mi
        m_new = float(np.linalg.norm(w))
        col[k] = m_new
        proj = ls.push_column(col)
        y = ls.solve()
        x = _combine(directions, y)
        res_true = _true_residual(A, b, x)
        history.push(x, res_true, proj, alpha_k)
        if rule.dp_enabled and discrepancy_stop(res_true, rule):
            reason = "discrepancy"
            break
        if m_new <= tol_break:
            reason = "breakdown"
            break
        u_basis.append(w / m_new)
        snew = np.ravel(counted.apply_adjoint(u_basis[-1]))
        for vi in v_basis:
            snew = snew - float(np.dot(vi, snew)) * vi
        s_norm = float(np.linalg.norm(snew))
        if s_norm <= tol_break:
            reason = "breakdown"
            break
        v_basis.append(snew / s_norm)
    return history.record(reason, x, counted.count, skipped)
