#!/usr/bin/env python3
"""Smoke test for the rbsgm extension module.

Build and stage the module first:

    cargo build --release -p rbsgm-python
    cp target/release/librbsgm.so python/rbsgm.so

then run `python3 python/smoke_test.py`.
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import rbsgm


def check(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"{status} {name}" + (f" — {detail}" if detail else ""))
    return ok


def main():
    ok = True

    basis = rbsgm.GpcBasis(2, 2)
    ok &= check("basis dimension", basis.n_p == 6, repr(basis))
    ok &= check(
        "graded index order",
        basis.indices() == [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]],
    )
    phi = basis.evaluate([0.0, 0.0])
    ok &= check("constant mode is one", abs(phi[0] - 1.0) < 1e-15)

    beta1 = rbsgm.legendre_beta(1)
    ok &= check("legendre beta_1", abs(beta1 - 1.0 / math.sqrt(3.0)) < 1e-15, f"{beta1:.12f}")

    rows, cols, vals = basis.coupling(0, 0)
    identity = (
        sorted(zip(rows, cols)) == [(i, i) for i in range(6)]
        and all(abs(v - 1.0) < 1e-15 for v in vals)
    )
    ok &= check("G_00 is the identity", identity)

    lam = rbsgm.kl_eigenvalues_1d(1.0, -1.0, 1.0, 8)
    nys = rbsgm.kl_eigenvalues_1d_nystrom(1.0, -1.0, 1.0, 400, 8)
    dev = max(abs(a - b) / b for a, b in zip(lam, nys))
    ok &= check("KL spectrum vs Nystrom", dev < 1e-5, f"max rel dev {dev:.2e}")
    ok &= check("KL trace bound", sum(lam) < 2.0, f"partial trace {sum(lam):.4f}")

    pred = rbsgm.secant_predict(15, -2.0, 30, -3.5, 1e-5, 15, 1000)
    ok &= check("secant prediction", pred == 45, f"predicted {pred}")

    config = "\n".join(
        [
            'problem = "diffusion"',
            "n = 9",
            "m = 2",
            "p = 2",
            "tol = 1e-4",
            "ns = 3",
            "nmax = 30",
            "training = 40",
        ]
    )
    with tempfile.TemporaryDirectory() as out:
        report = json.loads(rbsgm.run_experiment(config, out))
        ok &= check(
            "small experiment converges",
            report["converged"] and report["rbsgm"]["final_relres"] <= 1e-4,
            f"r={report['rbsgm']['final_r']} relres={report['rbsgm']['final_relres']:.2e}",
        )
        ok &= check(
            "artifacts written",
            os.path.exists(os.path.join(out, "residual_curve.csv"))
            and os.path.exists(os.path.join(out, "stats_mean.csv")),
        )

    print("smoke test:", "OK" if ok else "FAILED")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
