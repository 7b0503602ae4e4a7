"""Reduced-basis machinery on the dual (test) space.

Snapshots of the normal-equation solution are orthonormalized against the
streamline-Sobolev Gram matrix, the six operator blocks and the rhs component
are projected onto the basis, and the dual norm of the residual is
precomputed as one Gram matrix of Riesz representatives so that the online
solve and its error certificate cost O(N^2) independently of the grid.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from uwrom import fem, flow as flowmod, transport

log = logging.getLogger(__name__)


class EmptyBasisError(RuntimeError):
    """Orthonormalization dropped every candidate vector."""


class NumericalInconsistencyError(RuntimeError):
    """The precomputed residual quadratic form is negative beyond roundoff."""


class TrainingAborted(RuntimeError):
    """Greedy training failed; partial results are attached."""

    def __init__(self, message, basis=None, model=None, decay=None):
        super().__init__(message)
        self.basis = basis
        self.model = model
        self.decay = decay


# ---------------------------------------------------------------------------
# basis generation
# ---------------------------------------------------------------------------

@dataclass
class ReducedBasis:
    """Column matrix of basis coefficient vectors, orthonormal in the inner
    product of ``gram``."""

    matrix: np.ndarray
    gram: object
    selected: list

    @property
    def size(self):
        return self.matrix.shape[1]


def gram_schmidt(vectors, gram, drop_tol=1e-10, selected=None):
    """Modified Gram-Schmidt with one re-orthogonalization pass.

    Vectors whose norm after projection falls below ``drop_tol`` times their
    initial norm are dropped; raises EmptyBasisError if nothing survives.
    """
    cols = []
    for v in vectors:
        u = np.array(v, dtype=float, copy=True)
        pre = np.sqrt(u @ (gram @ u))
        if pre == 0.0:
            continue
        for _ in range(2):
            for b in cols:
                u -= (b @ (gram @ u)) * b
        post = np.sqrt(max(u @ (gram @ u), 0.0))
        if post < drop_tol * pre:
            continue
        cols.append(u / post)
    if not cols:
        raise EmptyBasisError("all vectors were dropped during orthonormalization")
    return ReducedBasis(matrix=np.column_stack(cols), gram=gram,
                        selected=list(selected) if selected else [])


# ---------------------------------------------------------------------------
# reduced model
# ---------------------------------------------------------------------------

@dataclass
class Certificate:
    """Residual-based error bound Delta = ||r||_* / sqrt(alpha_LB)."""

    delta: float
    residual_norm: float
    alpha_lb: float
    mu: transport.Parameter


def coercivity_lower_bound(mu, c_p):
    """alpha_LB(mu) = 1 / (2 + C_p^2 (2 max(c_w,c_c)^2 + 1))."""
    if c_p <= 0.0:
        raise ValueError(f"Poincare constant must be positive, got {c_p}")
    c_inf = max(mu.c_w, mu.c_c)
    return 1.0 / (2.0 + c_p**2 * (2.0 * c_inf**2 + 1.0))


class ReducedModel:
    """Offline data of the reduced normal equation.

    ``blocks[(p,q)]`` are the projected operator components for p <= q,
    ``riesz`` the Gram matrix of the Riesz representatives of the rhs and of
    the six symmetrized components applied to the basis (layout: column 0 the
    rhs, then block k basis vector i at 1 + k*N + i).
    """

    def __init__(self, blocks, f_red, riesz, trace_gram, constants, provenance):
        self.blocks = blocks
        self.f_red = np.asarray(f_red, dtype=float)
        self.riesz = np.asarray(riesz, dtype=float)
        self.trace_gram = np.asarray(trace_gram, dtype=float)
        self.constants = dict(constants)
        self.provenance = dict(provenance)
        self.n_basis = self.f_red.size
        self._sym = None

    @property
    def q_a(self):
        return 3

    def sym_blocks(self):
        if self._sym is None:
            self._sym = []
            for p, q in transport._SYM_PAIRS:
                y = self.blocks[(p, q)]
                self._sym.append(y if p == q else y + y.T)
        return self._sym

    def online_matrix(self, mu):
        th = transport.theta_pairs(mu)
        a = np.zeros((self.n_basis, self.n_basis))
        for c, y in zip(th, self.sym_blocks()):
            if c != 0.0:
                a += c * y
        return a

    def residual_norm(self, mu, w_n):
        """Dual norm of the FOM residual of the lifted reduced solution,
        evaluated from the precomputed Riesz Gram matrix."""
        if mu.g_0 == 0.0:
            return 0.0
        gamma = np.empty(1 + 6 * self.n_basis)
        gamma[0] = 1.0
        th = transport.theta_pairs(mu)
        w_unit = np.asarray(w_n) / mu.g_0
        for k in range(6):
            gamma[1 + k * self.n_basis:1 + (k + 1) * self.n_basis] = -th[k] * w_unit
        q = float(gamma @ (self.riesz @ gamma))
        if q < -1e-12:
            raise NumericalInconsistencyError(
                f"residual quadratic form is {q:.3e} < -1e-12 at mu={mu}")
        return abs(mu.g_0) * np.sqrt(max(q, 0.0))

    def truncate(self, n):
        """Sub-model spanned by the first n basis vectors (greedy bases are
        hierarchical)."""
        if not 0 <= n <= self.n_basis:
            raise ValueError(f"cannot truncate size-{self.n_basis} model to {n}")
        idx = np.concatenate([[0]] + [
            1 + k * self.n_basis + np.arange(n) for k in range(6)
        ]).astype(int)
        return ReducedModel(
            blocks={pq: y[:n, :n] for pq, y in self.blocks.items()},
            f_red=self.f_red[:n],
            riesz=self.riesz[np.ix_(idx, idx)],
            trace_gram=self.trace_gram[:n, :n],
            constants=self.constants,
            provenance=self.provenance,
        )


def build_reduced_model(sys, basis, constants, provenance=None, gram_solver=None):
    """Project the affine system onto a basis and precompute the Riesz data."""
    b = basis.matrix
    n = b.shape[1]
    blocks = {}
    for p, q in transport._SYM_PAIRS:
        blocks[(p, q)] = b.T @ (sys.component(p, q) @ b)
    f_red = b.T @ sys.f1

    if gram_solver is None:
        gram_solver = fem.factor_spd(sys.gram)
    cols = [sys.f1] + [op @ b[:, i] for op in sys.sym_ops for i in range(n)]
    v = np.column_stack(cols)
    x = np.column_stack([gram_solver.solve(v[:, j]) for j in range(v.shape[1])])
    riesz = v.T @ x
    riesz = 0.5 * (riesz + riesz.T)

    trace_gram = b.T @ (sys.outflow_mass @ b)
    return ReducedModel(blocks, f_red, riesz, trace_gram, constants,
                        provenance or {})


def rom_solve(rm, mu):
    """Dense reduced solve plus residual certificate; online cost independent
    of the full-order dimension."""
    alpha = coercivity_lower_bound(mu, rm.constants["c_p"])
    if rm.n_basis == 0:
        w_n = np.zeros(0)
    else:
        a = rm.online_matrix(mu)
        rhs = mu.g_0 * rm.f_red
        c, low = scipy.linalg.cho_factor(a)
        w_n = scipy.linalg.cho_solve((c, low), rhs)
    res = rm.residual_norm(mu, w_n)
    cert = Certificate(delta=res / np.sqrt(alpha), residual_norm=res,
                       alpha_lb=alpha, mu=mu)
    return w_n, cert


def online_condition(rm, mu):
    return float(np.linalg.cond(rm.online_matrix(mu)))


# ---------------------------------------------------------------------------
# greedy training
# ---------------------------------------------------------------------------

def default_constants(flow, n_seeds=64, t_cap=100.0, c_p_override=None):
    """Certificate constants from streamline traverse times (or an explicit
    override for fields with unbounded traverse time)."""
    times = flowmod.estimate_traverse_times(flow, n_seeds=n_seeds, t_cap=t_cap)
    c_p = flowmod.poincare_constant(times)
    if c_p_override is not None:
        c_p = float(c_p_override)
    return {"c_p": c_p, "t_min": times.t_min, "t_max": times.t_max,
            "capped": times.capped}


@dataclass
class GreedyResult:
    basis: ReducedBasis
    model: ReducedModel
    decay: list


def greedy_train(sys, gram, training_set, tol=1e-8, n_max=None, mode="weak",
                 constants=None, provenance=None, track_true_errors=False):
    """Greedy basis selection on the dual snapshots.

    ``strong`` mode precomputes every training snapshot and maximizes the
    true Gram-norm error; ``weak`` mode maximizes the residual certificate
    and solves the full model only for selected parameters.  Ties break on
    the lowest training index; stops at ``tol`` or ``n_max``.
    """
    if mode not in ("strong", "weak"):
        raise ValueError(f"unknown greedy mode {mode!r}")
    if not training_set:
        raise ValueError("training set must be nonempty")
    n_max = n_max if n_max is not None else len(training_set)
    constants = constants or default_constants(sys.flow)
    gram_solver = fem.factor_spd(gram)

    def fom_snapshot(mu, partial):
        try:
            return transport.solve_fom(sys, mu).w
        except fem.SolverFailure as err:
            raise TrainingAborted(
                f"full-order solve failed at mu={mu}: {err}",
                basis=partial[0], model=partial[1], decay=partial[2]) from err

    snapshots_all = None
    need_true = mode == "strong" or track_true_errors
    if need_true:
        snapshots_all = np.column_stack(
            [fom_snapshot(mu, (None, None, [])) for mu in training_set])

    snapshots, selected, decay = [], [], []
    basis = ReducedBasis(matrix=np.zeros((sys.n, 0)), gram=gram, selected=[])
    model = build_reduced_model(sys, basis, constants, provenance, gram_solver)
    taken = np.zeros(len(training_set), dtype=bool)
    recorded = -1

    while True:
        n = basis.size
        true_errors = None
        if need_true:
            true_errors = np.empty(len(training_set))
            for i, mu in enumerate(training_set):
                w_n, _ = rom_solve(model, mu)
                diff = snapshots_all[:, i] - (basis.matrix @ w_n if n else 0.0)
                true_errors[i] = np.sqrt(max(diff @ (gram @ diff), 0.0))
        if mode == "strong":
            indicators = true_errors.copy()
        else:
            indicators = np.array(
                [rom_solve(model, mu)[1].delta for mu in training_set])

        if n > recorded:
            decay.append({
                "N": n,
                "max_indicator": float(indicators.max()),
                "max_true_error": float(true_errors.max()) if need_true
                else np.nan,
            })
            recorded = n
        if indicators.max() <= tol or n >= n_max or taken.all():
            break

        pick = int(np.argmax(np.where(taken, -np.inf, indicators)))
        mu_star = training_set[pick]
        taken[pick] = True
        if snapshots_all is not None:
            snap = snapshots_all[:, pick]
        else:
            snap = fom_snapshot(mu_star, (basis, model, decay))
        new_basis = gram_schmidt(snapshots + [snap], gram,
                                 selected=selected + [mu_star])
        if new_basis.size == basis.size:
            # numerically dependent snapshot (indicator at its roundoff
            # floor); exclude the parameter and try the next candidate
            log.warning("snapshot at %s is linearly dependent, skipping",
                        mu_star)
            continue
        snapshots.append(snap)
        selected.append(mu_star)
        basis = new_basis
        model = build_reduced_model(sys, basis, constants, provenance,
                                    gram_solver)

    return GreedyResult(basis=basis, model=model, decay=decay)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_model(rm, path):
    """Write the reduced model as a self-describing npz container."""
    arrays = {
        "f_red": rm.f_red,
        "riesz": rm.riesz,
        "trace_gram": rm.trace_gram,
        "meta": np.frombuffer(json.dumps({
            "n_basis": rm.n_basis,
            "q_a": rm.q_a,
            "constants": rm.constants,
            "provenance": rm.provenance,
        }).encode(), dtype=np.uint8),
    }
    for (p, q), y in rm.blocks.items():
        arrays[f"block_{p}{q}"] = y
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_model(path):
    """Load a model written by :func:`save_model`; inverse up to bit
    identity."""
    try:
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            blocks = {}
            for p, q in transport._SYM_PAIRS:
                blocks[(p, q)] = data[f"block_{p}{q}"]
            rm = ReducedModel(
                blocks=blocks,
                f_red=data["f_red"],
                riesz=data["riesz"],
                trace_gram=data["trace_gram"],
                constants=meta["constants"],
                provenance=meta["provenance"],
            )
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as err:
        raise ValueError(f"cannot load reduced model from {path}: {err}") from err
    if rm.n_basis != meta["n_basis"]:
        raise ValueError(f"inconsistent model file {path}")
    return rm
