"""Classify the domain corpus in data/ and run null-quadrature tests on the planar ones."""
import argparse
import json
from pathlib import Path

from bubblepot import domains as dom
from bubblepot import nullquad as nq

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data", default=str(ROOT / "data"), help="directory of domain JSON files")
    p.add_argument("--json", help="write all results to this file")
    args = p.parse_args()
    rows = {}
    for path in sorted(Path(args.data).glob("*.json")):
        D = dom.from_json(path.read_text())
        res = nq.classify(D)
        row = {"label": res.label, "density_limit": res.density_limit, "quadratic_residual": res.quadratic_residual}
        if D.n == 2:
            centers = [tuple(p) for p in D.interior_samples(2, seed=3)]
            nqr = nq.null_quadrature_test(D, centers)
            row["null_quadrature_relative"] = nqr.max_relative
        rows[path.stem] = row
        extra = f"  null quadrature {row['null_quadrature_relative']:.1e}" if "null_quadrature_relative" in row else ""
        print(f"{path.stem:12s} {res.label:20s} density {res.density_limit:.3f}  "
              f"residual {res.quadratic_residual:.1e}{extra}")
    if args.json:
        Path(args.json).write_text(json.dumps(rows, indent=1))


if __name__ == "__main__":
    main()
