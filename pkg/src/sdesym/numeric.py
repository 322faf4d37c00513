"""Path simulation and numerical witnesses for the symbolic claims.

Everything symbolic in this package is double-checked by sampling; this
module supplies the sampling side for whole trajectories: Euler-Maruyama
and Heun path generation with reproducible per-path noise streams,
pathwise comparison of a reduced equation against the original through
the straightening map, strong-order estimation on nested noise, and the
epsilon-scaling test that detects symmetry violations directly on paths.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .expr import (
    Expr, Num, Sym, Add, Mul, Pow, Prim, Opaque, ZERO,
    EvalPoint, evaluate, is_zero, opaque_functions, add, mul, differentiate,
)
from .model import SdeSystem, VectorField
from .calculus import as_ito, InterpretationError, TransformedSde

__all__ = [
    "EULER_MARUYAMA", "STRATONOVICH_HEUN",
    "SimulationConfig", "PathSet", "PathwiseReport", "OrderEstimate",
    "ScalingResult", "compile_expr", "simulate", "pathwise_check",
    "strong_order_estimate", "epsilon_symmetry_scaling",
    "finite_difference", "export_csv",
]

EULER_MARUYAMA = "EulerMaruyama"
STRATONOVICH_HEUN = "StratonovichHeun"

_PRIM_FUNCS = {"exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos}


def compile_expr(e: Expr):
    """Compile an expression to a closure over a dict of numpy arrays.

    The closure returns an array broadcast from its inputs (or a plain
    float for constant expressions).  Domain violations surface as
    nan/inf in the output rather than exceptions; callers run under
    errstate(all='ignore') and treat non-finite values as exits from
    the validity domain.
    """
    if isinstance(e, Num):
        v = float(e.value)
        return lambda env: v
    if isinstance(e, Sym):
        name = e.name
        return lambda env: env[name]
    if isinstance(e, Add):
        fns = [compile_expr(x) for x in e.terms]
        def _add(env):
            out = fns[0](env)
            for fn in fns[1:]:
                out = out + fn(env)
            return out
        return _add
    if isinstance(e, Mul):
        fns = [compile_expr(x) for x in e.factors]
        def _mul(env):
            out = fns[0](env)
            for fn in fns[1:]:
                out = out * fn(env)
            return out
        return _mul
    if isinstance(e, Pow):
        bf, ef = compile_expr(e.base), compile_expr(e.exponent)
        return lambda env: np.power(bf(env), ef(env))
    if isinstance(e, Prim):
        fn = _PRIM_FUNCS[e.name]
        af = compile_expr(e.arg)
        return lambda env: fn(af(env))
    if isinstance(e, Opaque):
        raise ValueError(
            f"cannot compile free function symbol {e.name!r}; instantiate "
            "it before simulating")
    raise TypeError(f"unknown node {type(e).__name__}")


@dataclass(frozen=True)
class SimulationConfig:
    t0: float = 0.0
    t1: float = 1.0
    h: float = 1e-3
    x0: tuple = (1.0,)
    paths: int = 100
    seed: int = 0
    scheme: str = None   # derived from the interpretation when None

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be positive")
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")
        if self.paths < 1:
            raise ValueError("need at least one path")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative 64-bit integer")
        span = self.t1 - self.t0
        n = round(span / self.h)
        if n < 1 or abs(n * self.h - span) > 1e-9 * max(1.0, abs(span)):
            raise ValueError(
                f"(t1 - t0)/h = {span / self.h} is not an integer step count")
        if self.scheme not in (None, EULER_MARUYAMA, STRATONOVICH_HEUN):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def steps(self) -> int:
        return round((self.t1 - self.t0) / self.h)


@dataclass
class PathSet:
    times: np.ndarray        # (steps+1,)
    states: np.ndarray       # (paths, steps+1, n)
    increments: np.ndarray   # (paths, steps, m) raw Wiener increments
    valid: np.ndarray        # (paths,) bool; False = left validity domain
    seed: int
    config: SimulationConfig
    state_names: tuple
    noise_names: tuple

    @property
    def paths(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.increments.shape[1]

    @property
    def n_excluded(self) -> int:
        return int((~self.valid).sum())

    @property
    def wiener(self) -> np.ndarray:
        """Cumulated noise w(t) on the grid, zero at t0: (paths, steps+1, m)."""
        m = self.increments.shape[2]
        w = np.zeros((self.paths, self.steps + 1, m))
        np.cumsum(self.increments, axis=1, out=w[:, 1:, :])
        return w

    def increment_sanity(self) -> dict:
        """Moment check on the stored increments.

        The per-step mean should sit within 5 standard errors of 0 and
        the variance within 10% of h.  Small ensembles (fewer than 1000
        increments) pass vacuously: the bounds are not sharp there.
        """
        total = self.paths * self.steps * self.increments.shape[2]
        h = self.config.h
        mean = float(self.increments.mean())
        var = float(self.increments.var())
        gated = total >= 1000
        mean_bound = 5.0 * math.sqrt(h / max(total, 1))
        ok = (not gated) or (abs(mean) <= mean_bound
                             and abs(var - h) <= 0.1 * h)
        return {"mean": mean, "mean_bound": mean_bound, "variance": var,
                "h": h, "active": gated, "ok": ok}


def _draw_increments(cfg: SimulationConfig, m: int) -> np.ndarray:
    """One Philox stream per (seed, path): adding paths never reshuffles
    the existing ones."""
    out = np.empty((cfg.paths, cfg.steps, m))
    root = math.sqrt(cfg.h)
    for p in range(cfg.paths):
        bitgen = np.random.Philox(key=np.array([cfg.seed, p], dtype=np.uint64))
        rng = np.random.Generator(bitgen)
        out[p] = rng.standard_normal((cfg.steps, m)) * root
    return out


def _coefficient_fns(sys: SdeSystem):
    drift = [compile_expr(e) for e in sys.drift]
    diff = [[compile_expr(e) for e in row] for row in sys.diffusion]
    return drift, diff


def _env_at(sys: SdeSystem, t: float, x: np.ndarray) -> dict:
    env = {sys.time: t}
    for i, name in enumerate(sys.states):
        env[name] = x[:, i]
    return env


def _from_increments(sys: SdeSystem, cfg: SimulationConfig,
                     increments: np.ndarray, scheme: str) -> PathSet:
    drift, diff = _coefficient_fns(sys)
    paths, steps, m = increments.shape
    n = sys.n
    times = cfg.t0 + cfg.h * np.arange(steps + 1)
    states = np.empty((paths, steps + 1, n))
    states[:, 0, :] = np.asarray(cfg.x0, dtype=float)

    h = cfg.h
    with np.errstate(all="ignore"):
        for s in range(steps):
            x = states[:, s, :]
            dw = increments[:, s, :]
            env = _env_at(sys, times[s], x)
            fx = [np.broadcast_to(drift[i](env), (paths,)) for i in range(n)]
            gx = [[np.broadcast_to(diff[i][k](env), (paths,))
                   for k in range(m)] for i in range(n)]
            if scheme == EULER_MARUYAMA:
                for i in range(n):
                    step = fx[i] * h
                    for k in range(m):
                        step = step + gx[i][k] * dw[:, k]
                    states[:, s + 1, i] = x[:, i] + step
            else:
                pred = np.empty_like(x)
                for i in range(n):
                    step = fx[i] * h
                    for k in range(m):
                        step = step + gx[i][k] * dw[:, k]
                    pred[:, i] = x[:, i] + step
                env2 = _env_at(sys, times[s + 1], pred)
                for i in range(n):
                    step = 0.5 * (fx[i] + np.broadcast_to(drift[i](env2),
                                                          (paths,))) * h
                    for k in range(m):
                        gk = np.broadcast_to(diff[i][k](env2), (paths,))
                        step = step + 0.5 * (gx[i][k] + gk) * dw[:, k]
                    states[:, s + 1, i] = x[:, i] + step

    valid = np.isfinite(states).all(axis=(1, 2))
    return PathSet(times, states, increments, valid, cfg.seed, cfg,
                   sys.states, sys.noises)


def simulate(sys: SdeSystem, cfg: SimulationConfig) -> PathSet:
    """Integrate the system pathwise; deterministic given the seed.

    Ito systems step with Euler-Maruyama, Stratonovich systems with the
    Heun predictor-corrector, so the stored interpretation and the
    scheme's drift convention always agree.  Paths whose coefficients
    leave the validity domain turn non-finite, are flagged invalid, and
    are excluded from downstream statistics -- never clamped.
    """
    for e in list(sys.drift) + [e for row in sys.diffusion for e in row]:
        if opaque_functions(e):
            raise ValueError("system coefficients contain free function "
                             "symbols; instantiate them before simulating")
    if len(cfg.x0) != sys.n:
        raise ValueError(f"x0 has {len(cfg.x0)} entries for {sys.n} states")
    derived = EULER_MARUYAMA if sys.is_ito() else STRATONOVICH_HEUN
    if cfg.scheme is not None and cfg.scheme != derived:
        raise InterpretationError(
            f"scheme {cfg.scheme} does not integrate a "
            f"{sys.interpretation} system; leave scheme unset to derive it")
    increments = _draw_increments(cfg, sys.m)
    return _from_increments(sys, cfg, increments, derived)


# ---------------------------------------------------------------------------
# pathwise witness of a reduction

@dataclass
class PathwiseReport:
    median_sup_error: float
    per_path: np.ndarray
    n_excluded: int
    h: float
    paths: int

    @property
    def ok(self) -> bool:
        return math.isfinite(self.median_sup_error)


def _grid_env(ps: PathSet, time: str) -> dict:
    env = {time: ps.times[None, :]}
    for i, name in enumerate(ps.state_names):
        env[name] = ps.states[:, :, i]
    w = ps.wiener
    for k, name in enumerate(ps.noise_names):
        env[name] = w[:, :, k]
    return env


def _pathwise_error(ps: PathSet, reduced: TransformedSde, phi: Expr,
                    time: str) -> PathwiseReport:
    if not reduced.state_free:
        raise ValueError("reduced coefficients still involve the state; "
                         "direct integration needs the integrable or "
                         "quadrature form")
    paths, grid = ps.states.shape[0], ps.states.shape[1]
    with np.errstate(all="ignore"):
        env = _grid_env(ps, time)
        target = np.broadcast_to(compile_expr(phi)(env), (paths, grid)).copy()

        left = {k: (v[:, :-1] if isinstance(v, np.ndarray) else v)
                for k, v in env.items()}
        left[time] = ps.times[None, :-1]
        stepsum = np.broadcast_to(
            compile_expr(reduced.drift[0])(left), (paths, grid - 1)
        ) * ps.config.h
        for k in range(ps.increments.shape[2]):
            bk = np.broadcast_to(compile_expr(reduced.noise[0][k])(left),
                                 (paths, grid - 1))
            stepsum = stepsum + bk * ps.increments[:, :, k]

        x = np.empty((paths, grid))
        x[:, 0] = target[:, 0]
        np.cumsum(stepsum, axis=1, out=x[:, 1:])
        x[:, 1:] += target[:, 0:1]

        sup = np.max(np.abs(target - x), axis=1)
    usable = ps.valid & np.isfinite(sup)
    median = float(np.median(sup[usable])) if usable.any() else math.inf
    return PathwiseReport(median, sup, int((~usable).sum()),
                          ps.config.h, paths)


def pathwise_check(original: SdeSystem, reduced: TransformedSde, phi: Expr,
                   cfg: SimulationConfig) -> PathwiseReport:
    """Simulate the original system, push each path through the map, and
    compare against direct integration of the reduced equation on the
    same noise.  Returns the median over paths of the sup-norm gap."""
    original = as_ito(original)
    if original.n != 1:
        raise ValueError("pathwise check compares scalar reductions")
    ps = simulate(original, cfg)
    return _pathwise_error(ps, reduced, phi, original.time)


@dataclass
class OrderEstimate:
    order: float
    err_coarse: float
    err_fine: float
    skipped: bool


def strong_order_estimate(original: SdeSystem, reduced: TransformedSde,
                          phi: Expr, cfg: SimulationConfig) -> OrderEstimate:
    """Pathwise error at h and h/4 on nested noise; order = log4 ratio.

    The coarse increments are exact sums of the fine ones, so both runs
    see the same Brownian path.  When both errors sit at rounding level
    the scheme is exact for this system and the estimate is skipped.
    """
    original = as_ito(original)
    if original.n != 1:
        raise ValueError("order estimation compares scalar reductions")
    fine_cfg = dataclasses.replace(cfg, h=cfg.h / 4)
    fine_inc = _draw_increments(fine_cfg, original.m)
    ps_fine = _from_increments(original, fine_cfg, fine_inc, EULER_MARUYAMA)

    paths, fsteps, m = fine_inc.shape
    coarse_inc = fine_inc.reshape(paths, fsteps // 4, 4, m).sum(axis=2)
    ps_coarse = _from_increments(original, cfg, coarse_inc, EULER_MARUYAMA)

    err_f = _pathwise_error(ps_fine, reduced, phi, original.time)
    err_c = _pathwise_error(ps_coarse, reduced, phi, original.time)
    if err_f.median_sup_error < 1e-12 or err_c.median_sup_error < 1e-12:
        return OrderEstimate(None, err_c.median_sup_error,
                             err_f.median_sup_error, True)
    order = math.log(err_c.median_sup_error / err_f.median_sup_error) / math.log(4.0)
    return OrderEstimate(order, err_c.median_sup_error,
                         err_f.median_sup_error, False)


# ---------------------------------------------------------------------------
# epsilon-scaling symmetry witness

@dataclass
class ScalingResult:
    epsilons: tuple
    defects: tuple
    exponent: float
    degenerate: bool


def epsilon_symmetry_scaling(sys: SdeSystem, v: VectorField,
                             cfg: SimulationConfig,
                             epsilons=(1e-2, 1e-3, 1e-4)) -> ScalingResult:
    """Slide each path along the candidate flow and measure the defect.

    A path is mapped by x -> x + eps*xi and the one-step residual against
    the equation's own coefficients is measured, after subtracting the
    second-order noise term (1/2) eps H_kl (dw_k dw_l - delta_kl h) that
    any map of this form produces at finite h.  What remains scales like
    eps * (first determining residuals) + O(eps^2): slope about 2 on a
    log-log fit for a true symmetry whose xi actually bends with the
    state, about 1 for a violation.  Step size must be small enough that
    the discretization floor stays below the eps term; callers here use
    h = 1e-5.

    Two readings need the defect magnitude, not just the slope.  A
    state-free xi on affine coefficients produces no eps^2 term at all,
    so a true symmetry of that shape also fits slope 1 -- but its defect
    sits at the discretization floor eps*O(h^(3/2)), while a violated
    determining equation forces eps*|R2|*O(sqrt(h)), larger by 1/h.
    Compare defects[0] against those scales when the slope alone is
    ambiguous.
    """
    sys = as_ito(sys)
    if not is_zero(v.tau):
        raise ValueError("epsilon scaling handles simple candidates only")
    for xi in v.xi:
        if opaque_functions(xi):
            raise ValueError("instantiate free function symbols in the "
                             "candidate before the scaling test")

    ps = simulate(sys, cfg)
    n, m = sys.n, sys.m
    h = cfg.h
    paths, grid = ps.states.shape[0], ps.states.shape[1]

    def _second(i, k, l):
        terms = [ZERO]
        xi = v.xi[i]
        for j, xj in enumerate(sys.states):
            for p, xp in enumerate(sys.states):
                terms.append(mul(sys.diffusion[j][k], sys.diffusion[p][l],
                                 differentiate(differentiate(xi, xj), xp)))
        for j, xj in enumerate(sys.states):
            terms.append(mul(sys.diffusion[j][k],
                             differentiate(differentiate(xi, xj),
                                           sys.noises[l])))
            terms.append(mul(sys.diffusion[j][l],
                             differentiate(differentiate(xi, xj),
                                           sys.noises[k])))
        terms.append(differentiate(differentiate(xi, sys.noises[k]),
                                   sys.noises[l]))
        return add(*terms)

    with np.errstate(all="ignore"):
        env = _grid_env(ps, sys.time)
        xi_vals = [np.broadcast_to(compile_expr(v.xi[i])(env),
                                   (paths, grid)).copy()
                   for i in range(n)]
        left = {k: (val[:, :-1] if isinstance(val, np.ndarray) else val)
                for k, val in env.items()}
        left[sys.time] = ps.times[None, :-1]
        H = {}
        for i in range(n):
            for k in range(m):
                for l in range(m):
                    e = _second(i, k, l)
                    H[i, k, l] = (None if is_zero(e) else np.broadcast_to(
                        compile_expr(e)(left), (paths, grid - 1)))

        dw = ps.increments
        drift_fns = [compile_expr(e) for e in sys.drift]
        diff_fns = [[compile_expr(e) for e in row] for row in sys.diffusion]

        defects = []
        for eps in epsilons:
            mapped = ps.states + eps * np.stack(xi_vals, axis=2)
            menv = dict(left)
            for i, name in enumerate(sys.states):
                menv[name] = mapped[:, :-1, i]
            total = np.zeros((paths, grid - 1))
            for i in range(n):
                model = np.broadcast_to(drift_fns[i](menv),
                                        (paths, grid - 1)) * h
                for k in range(m):
                    gk = np.broadcast_to(diff_fns[i][k](menv),
                                         (paths, grid - 1))
                    model = model + gk * dw[:, :, k]
                for k in range(m):
                    for l in range(m):
                        if H[i, k, l] is None:
                            continue
                        quad = dw[:, :, k] * dw[:, :, l]
                        if k == l:
                            quad = quad - h
                        model = model + 0.5 * eps * H[i, k, l] * quad
                d = mapped[:, 1:, i] - mapped[:, :-1, i] - model
                total += np.abs(d)
            per_path = total.mean(axis=1)
            usable = ps.valid & np.isfinite(per_path)
            defects.append(float(np.median(per_path[usable]))
                           if usable.any() else math.inf)

    if all(d <= 1e-14 for d in defects):
        return ScalingResult(tuple(epsilons), tuple(defects), None, True)
    slope = float(np.polyfit(np.log(np.asarray(epsilons)),
                             np.log(np.asarray(defects)), 1)[0])
    return ScalingResult(tuple(epsilons), tuple(defects), slope, False)


# ---------------------------------------------------------------------------
# scalar helpers

def finite_difference(e: Expr, s: str, point: dict, step: float = 1e-6,
                      functions=None) -> float:
    """Central difference of e with respect to symbol s at a point."""
    hi = dict(point); hi[s] = point[s] + step
    lo = dict(point); lo[s] = point[s] - step
    fhi = evaluate(e, EvalPoint(hi, functions))
    flo = evaluate(e, EvalPoint(lo, functions))
    return (fhi - flo) / (2.0 * step)


def export_csv(ps: PathSet, fileobj) -> None:
    """Rows are (t, path, states..., cumulated noise...), one per grid
    point per path, excluded paths included and left as nan."""
    close = False
    if isinstance(fileobj, str):
        fileobj = open(fileobj, "w")
        close = True
    try:
        header = ["t", "path", *ps.state_names, *ps.noise_names]
        fileobj.write(",".join(header) + "\n")
        w = ps.wiener
        for p in range(ps.paths):
            for g in range(ps.states.shape[1]):
                row = [f"{ps.times[g]:.17g}", str(p)]
                row += [f"{ps.states[p, g, i]:.17g}"
                        for i in range(ps.states.shape[2])]
                row += [f"{w[p, g, k]:.17g}" for k in range(w.shape[2])]
                fileobj.write(",".join(row) + "\n")
    finally:
        if close:
            fileobj.close()
