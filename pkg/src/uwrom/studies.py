"""Experiment drivers: grid-convergence studies, greedy training with
validation sweeps, and reduced-model evaluation.

Every driver is deterministic for a fixed configuration and seed and writes
its results as CSV files (17 significant digits; timing columns exempt from
the determinism contract).
"""

import json
import logging
import os
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from uwrom import fem, flow as flowmod, mesh as meshmod, rom, transport

log = logging.getLogger(__name__)

# fixed data of the non-parametrized testcases: geometry, inflow profile,
# reaction rates (washcoat 0.5, coating 0.1)
TESTCASES = {
    "T.1": ("poiseuille", "sin4pi_sq"),
    "T.2": ("poiseuille", "indicator_quarter"),
    "T.3": ("darcy", "sin_pi_sq"),
    "P.1": ("darcy", "sin_pi_sq"),
    "P.2": ("darcy", "sin_pi_sq"),
    "P.3": ("darcy", "sin_pi_sq"),
}
FIXED_MU = transport.Parameter(c_w=0.5, c_c=0.1, g_0=1.0)
DEFAULT_N_TRAIN = {"P.1": 500, "P.2": 630, "P.3": 6300}


@dataclass
class StudyConfig:
    """Defaults reproduce the published desk-scale studies."""

    testcase: str = "T.1"
    orders: tuple = (1, 2)      # convergence studies
    r_min: int = 0
    r_max: int = 3
    k: int = 1                  # greedy studies
    r: int = 2
    mode: str = "weak"
    tol: float = 1e-12
    n_max: int = 14
    n_train: int = 0            # 0: testcase default
    n_test: int = 500
    seed: int = 94817
    c_p_override: float | None = None
    n_seeds: int = 64
    t_cap: float = 100.0
    fine_level: int | None = None   # None: finest needed level + 1
    darcy_order: int = 2
    k_w: float = 0.2
    k_c: float = 0.05
    radius: float = 0.5
    eta: float = 0.2
    rom_reps: int = 100
    fom_reps: int = 3
    outdir: str = "results"
    threads: int = 1
    emit_plots: bool = False

    def __post_init__(self):
        if self.testcase not in TESTCASES:
            raise ValueError(f"unknown testcase {self.testcase!r}")
        if self.n_train == 0:
            self.n_train = DEFAULT_N_TRAIN.get(self.testcase, 0)

    @property
    def geometry(self):
        return TESTCASES[self.testcase][0]

    @property
    def g_profile(self):
        return TESTCASES[self.testcase][1]


def load_config_file(path):
    """key=value lines; '#' starts a comment."""
    overrides = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed config line: {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            overrides[key] = value
    return overrides


def coerce_config(overrides):
    """Coerce string overrides onto StudyConfig field types."""
    typed = {}
    by_name = {f.name: f for f in fields(StudyConfig)}
    for key, value in overrides.items():
        if key not in by_name:
            raise ValueError(f"unknown config key {key!r}")
        if not isinstance(value, str):
            typed[key] = value
            continue
        name = key
        if name == "orders":
            typed[name] = tuple(int(s) for s in value.split(",") if s)
        elif name in ("c_p_override", "fine_level"):
            typed[name] = None if value.lower() in ("none", "") else (
                float(value) if name == "c_p_override" else int(value))
        elif name in ("testcase", "mode", "outdir"):
            typed[name] = value
        elif name == "emit_plots":
            typed[name] = value.lower() in ("1", "true", "yes")
        elif by_name[name].type in ("int", int):
            typed[name] = int(value)
        else:
            typed[name] = float(value)
    return typed


def make_config(**overrides):
    return StudyConfig(**coerce_config(overrides))


def dump_defaults(testcase=None):
    """The fixed model data and the study defaults, as key=value text."""
    lines = [
        "# geometry (identical for both flux models)",
        "washcoat = [0,1] x [3/8, 5/8]",
        "coating = [0,1] x [1/4, 3/4] minus washcoat",
        "# laminar flux model",
        "radius = 0.5",
        "eta = 0.2",
        "inflow_poiseuille = [0,1] x {1}",
        "outflow_poiseuille = [0,1] x {0}",
        "# darcy flux model",
        "k_w = 0.2",
        "k_c = 0.05",
        "inflow_darcy = {0} x (3/4, 1)",
        "outflow_darcy = {1} x (0, 1/4)",
        "# transport data (testcases T.1/T.2/T.3)",
        "c_w = 0.5",
        "c_c = 0.1",
        "f_volume = 0",
        "g_T1 = sin(4 pi s)^2",
        "g_T2 = indicator [0.25, 0.75]",
        "g_T3 = sin(pi s)^2",
        "# parameter domains",
        "P.1 = c_w in [0,1], c_c = 0, g_0 = 1, n_train 500",
        "P.2 = 0 <= c_c <= c_w <= 1, g_0 = 1, n_train 630",
        "P.3 = as P.2 with g_0 in [1,10], n_train 6300",
        "# study defaults",
    ]
    cfg = StudyConfig(testcase=testcase) if testcase else StudyConfig()
    for f in fields(StudyConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# shared setup
# ---------------------------------------------------------------------------

def build_flow(cfg, finest_r):
    if cfg.geometry == "poiseuille":
        return flowmod.PoiseuilleFlow(cfg.radius, cfg.eta)
    level = cfg.fine_level if cfg.fine_level is not None else finest_r + 1
    return flowmod.solve_darcy(meshmod.build_mesh(level), k_w=cfg.k_w,
                               k_c=cfg.k_c, order=cfg.darcy_order)


def build_system(cfg, r, k, flow):
    mesh = meshmod.build_mesh(r)
    space = fem.LagrangeSpace(mesh, k)
    facets = meshmod.classify_boundary(mesh, cfg.geometry)
    return transport.assemble_affine(space, flow, facets, cfg.g_profile)


def _fmt(v):
    return f"{v:.17g}"


def write_csv(path, header, rows):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, float) else str(v)
                              for v in row) + "\n")
    return path


def fit_order(hs, errors):
    """Least-squares slope of log(error) against log(h)."""
    if len(hs) < 2:
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(errors), 1)[0])


def fit_exponential_decay(ns, errors):
    """Fit error ~ alpha * exp(-beta N); returns (beta, alpha, r_squared)."""
    ns = np.asarray(ns, dtype=float)
    logs = np.log(np.asarray(errors))
    coeff = np.polyfit(ns, logs, 1)
    pred = np.polyval(coeff, ns)
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(-coeff[0]), float(np.exp(coeff[1])), r2


def _emit_plot_script(csv_path, xlabel, ylabel, logx, logy):
    gp = os.path.splitext(csv_path)[0] + ".gp"
    with open(gp, "w") as fh:
        fh.write('set datafile separator ","\n')
        if logx:
            fh.write("set logscale x\n")
        if logy:
            fh.write("set logscale y\n")
        fh.write(f'set xlabel "{xlabel}"\nset ylabel "{ylabel}"\n')
        fh.write(f'plot "{os.path.basename(csv_path)}" using 1:2 with '
                 "linespoints notitle\n")
    return gp


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

def run_convergence(cfg):
    """h-refinement study of the full-order model for one testcase.

    Writes one gridwidth,l2error CSV per polynomial order and returns the
    fitted convergence orders.
    """
    if cfg.testcase not in ("T.1", "T.2", "T.3"):
        raise ValueError(f"convergence study needs T.1/T.2/T.3, got {cfg.testcase}")
    if cfg.r_min > cfg.r_max:
        raise ValueError(f"empty refinement range {cfg.r_min}..{cfg.r_max}")
    rs = list(range(cfg.r_min, cfg.r_max + 1))
    flow = build_flow(cfg, finest_r=cfg.r_max)
    mu = FIXED_MU
    results = {}
    for k in cfg.orders:
        reference = _reference_for(cfg, flow, mu, k)
        hs, errs = [], []
        for r in rs:
            sys = build_system(cfg, r, k, flow)
            sol = transport.solve_fom(sys, mu)
            primal = transport.reconstruct_primal(sys, mu, sol)
            err = transport.l2_error(primal, reference)
            hs.append(sys.space.mesh.h)
            errs.append(err)
            log.info("%s k=%d r=%d: h=%.5f error=%.6e",
                     cfg.testcase, k, r, sys.space.mesh.h, err)
        name = cfg.testcase.replace(".", "")
        path = os.path.join(cfg.outdir, f"h_convergence_{name}_k{k}.csv")
        write_csv(path, ["gridwidth", "l2error"], list(zip(hs, errs)))
        if cfg.emit_plots:
            _emit_plot_script(path, "gridwidth", "l2error", True, True)
        eoc = fit_order(hs, errs)
        print(f"{cfg.testcase} k={k}: EOC = {eoc:.3f}  ({path})")
        results[k] = {"h": hs, "error": errs, "eoc": eoc, "csv": path}
    return results


def _reference_for(cfg, flow, mu, k):
    if cfg.testcase in ("T.1", "T.2"):
        g_fn = transport.G_PROFILES[cfg.g_profile]
        return lambda pts: transport.exact_poiseuille(
            pts, mu.c_w, mu.c_c, g_fn, radius=cfg.radius, eta=cfg.eta)
    # self-reference: one level finer, one order higher
    sys_ref = build_system(cfg, cfg.r_max + 1, k + 1, flow)
    w_ref = transport.solve_fom(sys_ref, mu).w
    space_ref = sys_ref.space
    return lambda pts: transport.evaluate_primal(space_ref, w_ref, flow, mu, pts)


# ---------------------------------------------------------------------------
# greedy study
# ---------------------------------------------------------------------------

def run_greedy_study(cfg):
    """Train a reduced basis, evaluate it on a random test set and report
    the fitted decay exponent and the online speedup."""
    if cfg.testcase not in transport.ParameterDomain.NAMES:
        raise ValueError(f"greedy study needs P.1/P.2/P.3, got {cfg.testcase}")
    domain = transport.ParameterDomain(cfg.testcase)
    training = domain.training_set(cfg.n_train)
    validation = domain.validation_set(cfg.n_test, cfg.seed)

    flow = build_flow(cfg, finest_r=cfg.r)
    sys = build_system(cfg, cfg.r, cfg.k, flow)
    constants = rom.default_constants(flow, n_seeds=cfg.n_seeds,
                                      t_cap=cfg.t_cap,
                                      c_p_override=cfg.c_p_override)
    provenance = {
        "testcase": cfg.testcase, "geometry": cfg.geometry, "r": cfg.r,
        "k": cfg.k, "seed": cfg.seed, "g_profile": cfg.g_profile,
        "mode": cfg.mode, "n_train": cfg.n_train,
    }
    t0 = time.perf_counter()
    result = rom.greedy_train(sys, sys.gram, training, tol=cfg.tol,
                              n_max=cfg.n_max, mode=cfg.mode,
                              constants=constants, provenance=provenance)
    train_time = time.perf_counter() - t0

    name = cfg.testcase.replace(".", "")
    os.makedirs(cfg.outdir, exist_ok=True)
    model_path = os.path.join(cfg.outdir, f"model_{name}.npz")
    rom.save_model(result.model, model_path)
    decay_path = write_csv(
        os.path.join(cfg.outdir, f"greedy_{name}_decay.csv"),
        ["N", "max_indicator", "max_true_error"],
        [(d["N"], d["max_indicator"], d["max_true_error"]) for d in result.decay])

    summary = evaluate_model(cfg, sys, result, validation)
    eval_rows = summary.pop("rows")
    n_dims = result.basis.size
    header = ([f"error_dim_{n}" for n in range(1, n_dims + 1)]
              + [f"rom_time_dim_{n}" for n in range(1, n_dims + 1)])
    eval_path = write_csv(
        os.path.join(cfg.outdir,
                     f"rb_evaluation_ntrain_{cfg.n_train}_{name}_H1b_"
                     f"ntest_{cfg.n_test}.csv"),
        header, eval_rows)
    if cfg.emit_plots:
        _emit_plot_script(decay_path, "N", "max_indicator", False, True)

    summary.update({
        "model": model_path, "decay_csv": decay_path, "eval_csv": eval_path,
        "train_time": train_time, "constants": constants,
        "n_basis": n_dims,
        # in-memory handles for downstream checks (not serialized)
        "result": result, "system": sys,
    })
    print(f"{cfg.testcase}: N={n_dims}, beta={summary['beta']:.3f} "
          f"(R^2={summary['r_squared']:.3f}), median speedup at N={n_dims}: "
          f"{summary['speedup']:.1f}x")
    return summary


def evaluate_model(cfg, sys, result, validation):
    """FOM-vs-ROM validation sweep; per-parameter errors and online times."""
    model = result.model
    basis = result.basis.matrix
    n_dims = model.n_basis
    sub_models = [model.truncate(n) for n in range(1, n_dims + 1)]

    rows = []
    errors = np.empty((len(validation), n_dims))
    times = np.empty((len(validation), n_dims))
    fom_times = np.empty(len(validation))
    conditions = np.empty(len(validation))
    for j, mu in enumerate(validation):
        solves = [transport.solve_fom(sys, mu) for _ in range(cfg.fom_reps)]
        sol = solves[-1]
        fom_times[j] = np.median([s.solve_time for s in solves])
        primal_fom = transport.reconstruct_primal(sys, mu, sol)
        conditions[j] = rom.online_condition(model, mu)
        for i, rm in enumerate(sub_models):
            reps = np.empty(cfg.rom_reps)
            for rep in range(cfg.rom_reps):
                t0 = time.perf_counter()
                w_n, _cert = rom.rom_solve(rm, mu)
                reps[rep] = time.perf_counter() - t0
            times[j, i] = float(np.median(reps))
            lifted = basis[:, : i + 1] @ w_n
            primal_rom = transport.reconstruct_primal(sys, mu, lifted)
            errors[j, i] = transport.l2_error(primal_fom, primal_rom)
        rows.append(list(errors[j]) + list(times[j]))

    med_err = np.median(errors, axis=0)
    med_time = np.median(times, axis=0)
    beta, alpha, r2 = fit_exponential_decay(np.arange(1, n_dims + 1), med_err)
    med_fom = float(np.median(fom_times))
    return {
        "rows": rows,
        "median_errors": med_err.tolist(),
        "median_rom_times": med_time.tolist(),
        "median_fom_time": med_fom,
        "speedup": med_fom / float(med_time[-1]),
        "beta": beta, "alpha": alpha, "r_squared": r2,
        "max_condition": float(conditions.max()),
    }


# ---------------------------------------------------------------------------
# model evaluation CLI op
# ---------------------------------------------------------------------------

def eval_admissible(rm, mu):
    """Domain check for stored models; the inflow magnitude is accepted in
    [0, g_max] since solutions scale linearly with it."""
    name = rm.provenance.get("testcase", "P.3")
    domain = transport.ParameterDomain(name)
    g_max = 10.0 if name == "P.3" else 1.0
    reaction_ok = domain.contains(
        transport.Parameter(mu.c_w, mu.c_c, 1.0 if name != "P.3" else
                            min(max(mu.g_0, 1.0), 10.0)))
    if not reaction_ok or not -1e-12 <= mu.g_0 <= g_max + 1e-12:
        raise ValueError(f"parameter {mu} outside the admissible domain of "
                         f"testcase {name}")


def rom_eval(model_path, mus, reps=100):
    """Solve the stored reduced model for the given parameters; returns one
    record per parameter with certificate and outflow-trace norm."""
    rm = rom.load_model(model_path)
    records = []
    for mu in mus:
        eval_admissible(rm, mu)
        t0 = time.perf_counter()
        w_n, cert = rom.rom_solve(rm, mu)
        wall = time.perf_counter() - t0
        for _ in range(max(0, reps - 1)):
            t0 = time.perf_counter()
            w_n, cert = rom.rom_solve(rm, mu)
            wall = min(wall, time.perf_counter() - t0)
        trace_norm = float(np.sqrt(max(w_n @ (rm.trace_gram @ w_n), 0.0))) \
            if rm.n_basis else 0.0
        records.append({
            "mu": mu, "w": w_n, "delta": cert.delta,
            "residual_norm": cert.residual_norm, "alpha_lb": cert.alpha_lb,
            "trace_norm": trace_norm, "time": wall,
        })
    return records


def run_darcy_field(cfg, path=None, resolution=64):
    """Solve the fine-grid pressure problem and dump the velocity field."""
    flow = build_flow(replace(cfg, testcase="T.3"), finest_r=cfg.r_max)
    path = path or os.path.join(cfg.outdir, "darcy_field.csv")
    os.makedirs(cfg.outdir, exist_ok=True)
    return flowmod.write_velocity_csv(flow, path, n=resolution)
