"""Symmetries whose coefficients involve the driving noise.

Two stories.  First, dy = dt + y dw admits xi = exp(w - t/2) d/dy: a
perfectly good symmetry whose straightening can only reach a quadrature
form dx = exp(t/2 - w) dt, because the compatibility condition on
gamma = d/dw (1/xi) fails.  Second, dy = y exp(-t) dt + y dw carries a
whole family xi = y * eta(exp(-t) + t/2 - w + log y) for ANY smooth eta,
and there the compatibility condition holds: picking the identity
member and the integration functions b(t) = 0, c = 1 lands on dx = dw.
"""

from sdesym import (
    FreeFunctionAnsatz, ZERO, compatibility_check, fixture_path,
    load_model, parse, reduce_random, residual_ito, to_str,
)


def rule(title):
    print()
    print(title)
    print("-" * len(title))


def show_system(sys):
    print(f"  drift : {to_str(sys.drift[0])}")
    print(f"  noise : {to_str(sys.diffusion[0][0])}")


def main():
    with open(fixture_path("example3.sde")) as fh:
        quad = load_model(fh.read())
    with open(fixture_path("example2.sde")) as fh:
        fam = load_model(fh.read())

    rule("A symmetry that stops at quadrature form")
    sys = quad.system
    v = quad.candidates["X1"]
    show_system(sys)
    print(f"  xi    : {to_str(v.xi[0])}")
    rep = residual_ito(sys, v)
    print(f"  determining equations: verified={rep.verified}")

    compat = compatibility_check(sys, v.xi[0], sys.domain)
    print(f"  gamma = d/dw(1/xi) = {to_str(compat.gamma)}")
    print(f"  compatibility residual = {to_str(compat.residual)}"
          f"  (satisfied={compat.satisfied})")

    res = reduce_random(sys, v, FreeFunctionAnsatz(ZERO, ZERO))
    print(f"  map   : x = {to_str(res.straightening.map)}")
    print(f"  result: dx = ({to_str(res.drift)}) dt"
          f" + ({to_str(res.noise[0])}) dw   [{res.classification}]")
    print(f"  failed side conditions: {', '.join(res.condition_failures)}")
    print("  the new equation is solved path by path as an explicit")
    print("  integral of exp(t/2 - w(t)) dt, but it is not an equation")
    print("  with time-only coefficients: that is what the failed")
    print("  compatibility condition predicted.")

    rule("A family of symmetries indexed by a free function")
    sys = fam.system
    family = fam.candidates["X_ETA"]
    show_system(sys)
    print(f"  xi    : {to_str(family.xi[0])}")
    rep = residual_ito(sys, family)
    print(f"  determining equations with eta left free: "
          f"verified={rep.verified} (max residual {rep.max_abs_residual:.2e}"
          " over random polynomial stand-ins for eta)")
    compat = compatibility_check(sys, family.xi[0], sys.domain)
    print(f"  compatibility satisfied: {compat.satisfied}")

    rule("Reducing the identity member")
    ident = fam.candidates["X_ID"]
    free = reduce_random(sys, ident)       # leaves b(t) and c symbolic
    print(f"  with free integration parts: dx = ({to_str(free.drift)}) dt"
          f" + ({to_str(free.noise[0])}) dw")
    pinned = reduce_random(sys, ident, FreeFunctionAnsatz(parse("0"),
                                                          parse("1")))
    print(f"  with b = 0, c = 1:            dx = ({to_str(pinned.drift)}) dt"
          f" + ({to_str(pinned.noise[0])}) dw   [{pinned.classification}]")
    print(f"  map   : x = {to_str(pinned.straightening.map)}")
    print("  every choice of b and c is another coordinate in which the")
    print("  equation integrates directly; the compatibility condition is")
    print("  what guarantees such a choice exists at all.")


if __name__ == "__main__":
    main()
