"""Verify the moving-boundary system for every growth family and save the reports.

    python3 scripts/run_verification.py --out results/verification
"""
import argparse
import time
from pathlib import Path

from bubblepot import evolution as ev

FAMILIES = {
    "ellipse_2_1": (ev.family_concentric_ellipsoids((2.0, 1.0)), [0.0, 0.5, 1.0]),
    "disk": (ev.family_concentric_ellipsoids((1.0, 1.0)), [0.0, 0.5, 1.0, 2.0]),
    "strip": (ev.family_cylinder((1.0,), 2), [0.0, 0.5, 1.0]),
    "paraboloid": (ev.family_translating_paraboloid((1.0,)), [0.0, 1.0]),
    "ellipsoid_3d": (ev.family_concentric_ellipsoids((1.0, 1.5, 0.7)), [0.0, 0.5]),
    "cylinder_3d": (ev.family_cylinder((1.0, 2.0), 3), [0.0, 0.5]),
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results/verification", help="output directory")
    p.add_argument("--only", nargs="*", choices=sorted(FAMILIES), help="subset of families")
    p.add_argument("--moments", action="store_true", help="append moment identity records")
    args = p.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or FAMILIES:
        fam, ts = FAMILIES[name]
        start = time.perf_counter()
        small = fam.n == 3
        rep = ev.verify_formulation(fam, ts, n_exterior=8 if small else 20, n_boundary=8 if small else 32,
                                    n_interior=8 if small else 20)
        if args.moments and fam.n == 2:
            rep.records.extend(ev.moment_records(fam, [t for t in ts if t > 0]))
        (out / f"{name}.json").write_text(rep.to_json())
        (out / f"{name}.csv").write_text(rep.to_csv())
        worst = "  ".join(f"{c} {rep.worst(c):.1e}" for c in ev.CONDITIONS)
        print(f"{name:14s} {'pass' if rep.passed else 'FAIL'}  {worst}  ({time.perf_counter() - start:.1f}s)")


if __name__ == "__main__":
    main()
