"""lambda_1 * E+ across (center, R, r) on the gasket and the unit interval.

Writes the full table with the tent-function bound next to lambda_1.
"""
import argparse
import os

import numpy as np

from exitdim.spaces import FractalSpec, build_euclidean, build_fractal
from exitdim.spectral import faber_krahn_constant

COLUMNS = ("space", "center", "R", "scale", "lambda1", "e_plus", "fk", "tent_quotient", "tent_bound", "n_states")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stage", type=int, default=8)
    ap.add_argument("--out", default="out/faber_krahn")
    a = ap.parse_args()
    os.makedirs(a.out, exist_ok=True)
    fr = np.array([1 / 3, 1 / 4, 1 / 6, 1 / 8])
    gasket = build_fractal(FractalSpec("gasket", a.stage, (0.5, 0.5)))
    line = build_euclidean(1, 1.0, 0.002)
    runs = [
        ("gasket", faber_krahn_constant(gasket, [gasket.nearest(p) for p in ((0.5, 0.0), (0.25, 0.2), (0.5, 0.6))], [0.25, 0.125], lambda R: R * fr)),
        ("interval", faber_krahn_constant(line, [line.nearest([0.0]), line.nearest([0.3])], [0.5, 0.25], lambda R: R * fr)),
    ]
    with open(os.path.join(a.out, "table.csv"), "w") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        for name, res in runs:
            print(f"{name}: lambda1*E+ in [{res['c_min']:.4f}, {res['c_max']:.4f}], max/min {res['ratio']:.4f}")
            for row in res["table"]:
                fh.write(",".join([name] + [str(row[k]) for k in COLUMNS[1:]]) + "\n")


if __name__ == "__main__":
    main()
