"""Moment dynamics and moment invariance across growth families."""
import argparse

from bubblepot import evolution as ev
from bubblepot import kernel as ker
from bubblepot import potential as pot


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--t", type=float, nargs="+", default=[0.5, 1.0], help="times for the dynamics check")
    p.add_argument("--paraboloid", action="store_true", help="include the paraboloid dynamics (slow)")
    args = p.parse_args()
    families = [("ellipse", ev.family_concentric_ellipsoids((2.0, 1.0))),
                ("disk", ev.family_concentric_ellipsoids((1.0, 1.0)))]
    if args.paraboloid:
        families.append(("paraboloid", ev.family_translating_paraboloid((1.0,))))
    print("dynamics: relative error between d/dt of the pairing and the pressure moment")
    for name, fam in families:
        for t in args.t:
            for phi in ev.default_bumps(fam, t):
                for a in ker.multi_indices(2, 3)[:3]:
                    m = ev.moment_dynamics_check(fam, t, phi, a)
                    print(f"  {name:10s} t={t:<4g} bump {phi.center} alpha {a}: lhs {m.lhs:+.6e} "
                          f"rhs {m.rhs:+.6e} rel {m.rel_err:.1e}")
    print("invariance: drift of the pairing with a bump inside D(0)")
    for name, fam in [("ellipse", ev.family_concentric_ellipsoids((2.0, 1.0))),
                      ("paraboloid", ev.family_translating_paraboloid((1.0,)))]:
        phi = pot.TestBump(tuple(fam.anchor), 0.25 if name == "paraboloid" else 0.4)
        inv = ev.moment_invariance_check(fam, [0.0, 0.5, 1.0, 2.0], phi)
        print(f"  {name:10s} drift {inv.max_drift:.2e}  scale {inv.scale:.2e}  relative {inv.relative:.1e}")


if __name__ == "__main__":
    main()
