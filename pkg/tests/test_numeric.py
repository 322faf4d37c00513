"""Path simulation, pathwise reduction witnesses, and scaling diagnostics.

Oracles used here:
  * additive-noise systems integrate exactly under Euler-Maruyama, so the
    simulated paths must match the closed form x0 + a*t + w(t) to rounding;
  * the deterministic equation dy = y dt has Euler error ~ e*h/2 at t=1,
    bracketing the relative error pins the scheme's order;
  * Heun on the Stratonovich equation dy = y o dw has closed form
    y0*exp(w(t)), giving a direct pathwise error oracle;
  * translating a path of dx = x dt + dw by a constant produces a defect
    of exactly eps*h per step, an exact oracle for the scaling witness.
"""

import dataclasses
import io
import math

import numpy as np
import pytest

from sdesym import (
    EULER_MARUYAMA, STRATONOVICH_HEUN, ITO, STRATONOVICH,
    InterpretationError, SimulationConfig, Sym, VectorField, ZERO,
    compile_expr, differentiate, epsilon_symmetry_scaling, evaluate,
    export_csv, finite_difference, make_system, opaque, parse,
    pathwise_check, reduce_deterministic, simulate, strong_order_estimate,
)
from sdesym.calculus import TransformedSde
from sdesym.expr import EvalPoint


def _cfg(**kw):
    base = dict(t0=0.0, t1=1.0, h=1e-3, x0=(1.0,), paths=20, seed=99)
    base.update(kw)
    return SimulationConfig(**base)


# ---------------------------------------------------------------------------
# configuration validation


@pytest.mark.parametrize("kw,fragment", [
    (dict(h=0.0), "h must be positive"),
    (dict(h=-1e-3), "h must be positive"),
    (dict(t1=0.0), "t1 must exceed t0"),
    (dict(t1=-1.0), "t1 must exceed t0"),
    (dict(paths=0), "at least one path"),
    (dict(seed=-1), "seed must be"),
    (dict(h=0.3), "not an integer step count"),
    (dict(scheme="RungeKutta"), "unknown scheme"),
])
def test_config_rejects_bad_values(kw, fragment):
    with pytest.raises(ValueError, match=fragment):
        _cfg(**kw)


def test_config_steps_property():
    assert _cfg(h=1e-3).steps == 1000
    assert _cfg(t0=0.5, t1=1.5, h=0.25).steps == 4


# ---------------------------------------------------------------------------
# compile_expr


def test_compile_constant_returns_plain_float():
    fn = compile_expr(parse("3/2"))
    assert fn({}) == 1.5


def test_compile_expression_broadcasts():
    fn = compile_expr(parse("y^2 + exp(t)"))
    y = np.array([1.0, 2.0])
    out = fn({"y": y, "t": 0.0})
    assert np.allclose(out, [2.0, 5.0])


def test_compile_rejects_free_function_symbols():
    with pytest.raises(ValueError, match="free function symbol"):
        compile_expr(opaque("eta", 0, Sym("y")))


# ---------------------------------------------------------------------------
# simulation: determinism and stream layout


def test_simulate_bit_identical_for_same_seed(example1):
    sys, cfg = example1.system, _cfg(paths=7, seed=1234)
    a = simulate(sys, cfg)
    b = simulate(sys, cfg)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.increments, b.increments)
    assert a.seed == b.seed == 1234


def test_simulate_differs_across_seeds(example1):
    a = simulate(example1.system, _cfg(paths=3, seed=1))
    b = simulate(example1.system, _cfg(paths=3, seed=2))
    assert not np.array_equal(a.increments, b.increments)


def test_adding_paths_never_reshuffles_existing_ones(example1):
    small = simulate(example1.system, _cfg(paths=5, seed=77))
    big = simulate(example1.system, _cfg(paths=12, seed=77))
    assert np.array_equal(big.increments[:5], small.increments)
    assert np.array_equal(big.states[:5], small.states)


def test_wiener_cumulates_increments(example1):
    ps = simulate(example1.system, _cfg(paths=4, h=0.1))
    w = ps.wiener
    assert np.array_equal(w[:, 0, :], np.zeros((4, 1)))
    assert np.allclose(np.diff(w, axis=1), ps.increments)


# ---------------------------------------------------------------------------
# simulation: scheme correctness against closed forms


def test_additive_noise_euler_is_exact_to_rounding():
    # dx = 2 dt + dw has the closed form x0 + 2 t + w(t); Euler-Maruyama
    # reproduces it exactly, so any gap is pure accumulated rounding.
    sys = make_system(["x"], ["w"], ["2"], [["1"]])
    ps = simulate(sys, _cfg(paths=30, x0=(0.5,), seed=5))
    exact = 0.5 + 2.0 * ps.times[None, :] + ps.wiener[:, :, 0]
    assert np.max(np.abs(ps.states[:, :, 0] - exact)) < 1e-12


def test_euler_drift_error_matches_first_order():
    # dy = y dt with no noise: Euler gives (1+h)^(1/h) at t=1 and the
    # relative error against e is h/2 + O(h^2).
    sys = make_system(["y"], ["w"], ["y"], [["0"]])
    ps = simulate(sys, _cfg(paths=1, h=1e-3))
    rel = abs(ps.states[0, -1, 0] - math.e) / math.e
    assert 3e-4 < rel < 7e-4


def test_heun_matches_stratonovich_exponential():
    # dy = y o dw has the closed form y0 * exp(w(t)); the Heun
    # predictor-corrector must track it pathwise.
    sys = make_system(["y"], ["w"], ["0"], [["y"]],
                      interpretation=STRATONOVICH)
    ps = simulate(sys, _cfg(paths=50, seed=31))
    exact = np.exp(ps.wiener[:, :, 0])
    sup = np.max(np.abs(ps.states[:, :, 0] - exact), axis=1)
    med = float(np.median(sup[ps.valid]))
    assert 1e-7 < med < 5e-3


def test_scheme_must_match_interpretation(example1):
    with pytest.raises(InterpretationError, match="does not integrate"):
        simulate(example1.system, _cfg(scheme=STRATONOVICH_HEUN))
    strat = make_system(["y"], ["w"], ["0"], [["y"]],
                        interpretation=STRATONOVICH)
    with pytest.raises(InterpretationError, match="does not integrate"):
        simulate(strat, _cfg(scheme=EULER_MARUYAMA))
    # explicitly matching scheme is accepted
    simulate(strat, _cfg(paths=1, h=0.25, scheme=STRATONOVICH_HEUN))


def test_simulate_rejects_free_function_coefficients(example1):
    sys = dataclasses.replace(example1.system,
                              drift=(opaque("eta", 0, Sym("y")),))
    with pytest.raises(ValueError, match="free function"):
        simulate(sys, _cfg())


def test_simulate_rejects_wrong_x0_width(linear2d):
    with pytest.raises(ValueError, match="x0 has 1 entries for 2 states"):
        simulate(linear2d.system, _cfg(x0=(1.0,)))


def test_blowup_paths_are_flagged_not_clamped():
    # dy = y^2 dt explodes in finite time; Euler overflows to non-finite
    # values and the affected paths are excluded, never clipped.
    sys = make_system(["y"], ["w"], ["y^2"], [["0"]])
    ps = simulate(sys, _cfg(paths=3, h=1e-2, x0=(2.0,)))
    assert ps.n_excluded == 3
    assert not ps.valid.any()
    assert not np.isfinite(ps.states[:, -1, 0]).any()


def test_increment_sanity_gate():
    sys = make_system(["x"], ["w"], ["0"], [["1"]])
    big = simulate(sys, _cfg(paths=100, h=1e-3, seed=3)).increment_sanity()
    assert big["active"] and big["ok"]
    assert abs(big["variance"] - 1e-3) <= 1e-4
    small = simulate(sys, _cfg(paths=2, h=0.1, seed=3)).increment_sanity()
    assert not small["active"] and small["ok"]


# ---------------------------------------------------------------------------
# pathwise witness of a reduction


def _identity_reduction():
    # dx = 1 dt + 1 dw is already in integrable form; the identity map
    # makes the comparison exact up to accumulated rounding.
    sys = make_system(["x"], ["w"], ["1"], [["1"]])
    reduced = TransformedSde(maps=(Sym("x"),), drift=(parse("1"),),
                             noise=((parse("1"),),), state_free=True,
                             noise_free=True)
    return sys, reduced


def test_pathwise_identity_sits_at_rounding_level():
    sys, reduced = _identity_reduction()
    rep = pathwise_check(sys, reduced, Sym("x"), _cfg(paths=10))
    assert rep.ok
    assert rep.median_sup_error < 1e-12
    assert rep.n_excluded == 0


def test_pathwise_example1_reduction_tracks_paths(example1):
    res = reduce_deterministic(example1.system, example1.candidates["X1"])
    cfg = _cfg(paths=100, seed=20260819)
    rep = pathwise_check(example1.system, res.transformed,
                         res.straightening.map, cfg)
    assert rep.ok
    assert 0.0 < rep.median_sup_error <= 0.05
    assert rep.paths == 100


def test_pathwise_check_is_scalar_only(linear2d):
    _, reduced = _identity_reduction()
    with pytest.raises(ValueError, match="scalar"):
        pathwise_check(linear2d.system, reduced, Sym("x1"), _cfg(x0=(0., 0.)))


def test_pathwise_rejects_state_dependent_reduced_form():
    sys, _ = _identity_reduction()
    bad = TransformedSde(maps=(Sym("x"),), drift=(Sym("x"),),
                         noise=((parse("1"),),), state_free=False,
                         noise_free=True)
    with pytest.raises(ValueError, match="still involve the state"):
        pathwise_check(sys, bad, Sym("x"), _cfg(paths=2))


# ---------------------------------------------------------------------------
# strong order on nested noise


def test_strong_order_example1_reduction(example1):
    res = reduce_deterministic(example1.system, example1.candidates["X1"])
    est = strong_order_estimate(example1.system, res.transformed,
                                res.straightening.map,
                                _cfg(paths=100, seed=20260819))
    assert not est.skipped
    assert est.err_fine < est.err_coarse
    assert 0.25 <= est.order <= 1.25


def test_strong_order_skips_exact_integration():
    sys, reduced = _identity_reduction()
    est = strong_order_estimate(sys, reduced, Sym("x"), _cfg(paths=10))
    assert est.skipped
    assert est.order is None
    assert est.err_coarse < 1e-12 and est.err_fine < 1e-12


# ---------------------------------------------------------------------------
# epsilon-scaling symmetry witness


def _eps_cfg(**kw):
    base = dict(t0=0.0, t1=0.25, h=1e-5, x0=(1.0,), paths=12, seed=7)
    base.update(kw)
    return SimulationConfig(**base)


def test_scaling_true_symmetry_has_quadratic_slope(example1):
    res = epsilon_symmetry_scaling(example1.system,
                                   example1.candidates["X1"], _eps_cfg())
    assert not res.degenerate
    assert res.exponent >= 1.7
    assert res.defects[0] > res.defects[-1]


def test_scaling_violation_defect_is_exactly_eps_h(control):
    # Translating dx = x dt + dw by eps changes the drift by exactly eps,
    # so every step contributes a defect of eps*h: slope 1, and the
    # defect values themselves are an exact oracle.
    res = epsilon_symmetry_scaling(control.system,
                                   control.candidates["NOT_SYM"], _eps_cfg())
    assert not res.degenerate
    assert abs(res.exponent - 1.0) < 1e-6
    for eps, d in zip(res.epsilons, res.defects):
        assert math.isclose(d, eps * 1e-5, rel_tol=1e-9)
    assert res.exponent <= 1.3


def test_scaling_magnitude_separates_state_free_cases(example3):
    # exp(w - t/2) is a symmetry of dy = dt + y dw but is state-free, so
    # its defect sits at the integration floor eps*O(h^(3/2)) and the
    # slope saturates at 1.  A candidate of the same shape that breaks
    # the noise determining equation forces eps*O(sqrt(h)) instead --
    # larger by roughly 1/h -- and one that breaks only the drift
    # equation lands in between at eps*O(h).  The magnitude reading,
    # not the slope, tells the three apart.
    sys = example3.system
    good = epsilon_symmetry_scaling(sys, example3.candidates["X1"],
                                    _eps_cfg())
    noise_bad = epsilon_symmetry_scaling(
        sys, VectorField((parse("exp(2*w)"),), ZERO), _eps_cfg())
    drift_bad = epsilon_symmetry_scaling(
        sys, VectorField((parse("exp(w)"),), ZERO), _eps_cfg())
    assert not good.degenerate and not noise_bad.degenerate
    assert good.defects[0] < 1e-8
    assert noise_bad.defects[0] / good.defects[0] > 1e3
    assert noise_bad.defects[0] > drift_bad.defects[0] > good.defects[0]


def test_scaling_zero_candidate_is_degenerate(example1):
    res = epsilon_symmetry_scaling(example1.system,
                                   VectorField((ZERO,), ZERO),
                                   _eps_cfg(t1=0.01, paths=2))
    assert res.degenerate
    assert res.exponent is None
    assert all(d <= 1e-14 for d in res.defects)


def test_scaling_rejects_tau_and_free_functions(example1):
    with pytest.raises(ValueError, match="simple candidates"):
        epsilon_symmetry_scaling(example1.system,
                                 VectorField((ZERO,), Sym("t")),
                                 _eps_cfg(t1=0.01, paths=1))
    with pytest.raises(ValueError, match="free function"):
        epsilon_symmetry_scaling(
            example1.system,
            VectorField((opaque("eta", 0, Sym("y")),), ZERO),
            _eps_cfg(t1=0.01, paths=1))


# ---------------------------------------------------------------------------
# scalar helpers


def test_finite_difference_matches_symbolic_derivative():
    e = parse("exp(sin(y)) + y^3")
    point = {"y": 0.7}
    fd = finite_difference(e, "y", point)
    sym = evaluate(differentiate(e, "y"), EvalPoint(point))
    assert abs(fd - sym) < 1e-6


def test_export_csv_layout(example1):
    ps = simulate(example1.system, _cfg(paths=2, h=0.1))
    buf = io.StringIO()
    export_csv(ps, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "t,path,y,w"
    assert len(lines) == 1 + 2 * 11
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and first[1] == "0"
    assert float(first[2]) == 1.0   # x0
    assert float(first[3]) == 0.0   # w(t0)
    # every row parses as (float, int, float, float)
    for row in lines[1:]:
        t, p, y, w = row.split(",")
        float(t); int(p); float(y); float(w)


def test_export_csv_accepts_path(tmp_path, example1):
    ps = simulate(example1.system, _cfg(paths=1, h=0.25))
    target = tmp_path / "paths.csv"
    export_csv(ps, str(target))
    content = target.read_text().strip().split("\n")
    assert content[0] == "t,path,y,w"
    assert len(content) == 1 + 5
