#!/usr/bin/env python3
"""Smoke test for the pqsteer_py extension module.

Builds nothing itself: it expects `cargo build -p pqsteer-py` (debug or
release) to have produced target/<profile>/libpqsteer_py.so, copies that
artifact under the importable name pqsteer_py.so, and exercises the main
entry points.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def locate_extension() -> Path:
    candidates = [
        REPO / "target" / profile / name
        for profile in ("release", "debug")
        for name in ("libpqsteer_py.so", "pqsteer_py.so", "libpqsteer_py.dylib")
    ]
    for c in candidates:
        if c.exists():
            return c
    sys.exit(
        "pqsteer_py extension not found; run `cargo build -p pqsteer-py` first"
    )


def main() -> None:
    artifact = locate_extension()
    stage = Path(tempfile.mkdtemp(prefix="pqsteer_py_"))
    shutil.copy2(artifact, stage / "pqsteer_py.so")
    sys.path.insert(0, str(stage))

    import pqsteer_py as pq

    checks = 0

    def check(cond, msg):
        nonlocal checks
        assert cond, msg
        checks += 1
        print(f"ok: {msg}")

    # Fixture loading and validation.
    abb1 = pq.Assemblage.fixture("abb1")
    check(abb1.is_valid(), "abb1 fixture is a valid assemblage")
    check(abb1.num_alices == 1 and abb1.num_bobs == 2, "abb1 scenario shape")
    check(abb1.validate() == [], "abb1 has no validation violations")

    # Parent-program relaxation: known negative optimum.
    lam = abb1.lambda_relaxation()
    check(
        abs(lam["lambda_star"] - (-0.0018652250)) < 5e-7,
        f"abb1 lambda_star = {lam['lambda_star']:.10f} matches reference",
    )
    check(not lam["feasible"], "abb1 parent program is infeasible")

    # Certification verdicts.
    pqnl = pq.Assemblage.fixture("abb-pqnl")
    rep = pqnl.certify()
    check(rep["verdict"] == "QuantumCertified", "abb-pqnl certifies quantum")

    pr = pq.Assemblage.fixture("pr")
    rep = pr.certify(npa_level=1)
    check(rep["verdict"] == "PostquantumCertified", "pr certifies postquantum")
    check(rep["failed_condition"] == "Condition1Npa", "pr fails the NPA condition")

    # LHS membership and hierarchy.
    check(abb1.lhs_membership()["status"] == "infeasible", "abb1 is not LHS")
    check(abb1.hierarchy(level=1) == "infeasible", "abb1 outside outer hierarchy")

    # Robustness against white noise.
    rob = abb1.robustness("white")
    check(
        abs(rob["r_star"] - 0.014702414) < 2e-5,
        f"abb1 white-noise robustness r* = {rob['r_star']:.9f} matches reference",
    )
    check(not rob["lower_bound_only"], "single-Alice robustness is exact")

    # Mixing: at r = r* + margin the parent program becomes feasible.
    white = pq.Assemblage.from_json(pq.noise_assemblage_json("white"))
    mixed = abb1.mix_with_noise(white, rob["r_star"] + 0.005)
    check(mixed.lambda_relaxation()["feasible"], "mixing past r* restores feasibility")

    # JSON round trip preserves behaviour and structure.
    doc = json.loads(abb1.to_json())
    check(doc["format_version"] == "1", "document format version")
    again = pq.Assemblage.from_json(abb1.to_json())
    check(again.to_json() == abb1.to_json(), "JSON round trip is stable")
    lam2 = again.lambda_relaxation()
    check(
        abs(lam2["lambda_star"] - lam["lambda_star"]) < 1e-12,
        "round-tripped assemblage gives the same lambda_star",
    )

    # Joint outcome probabilities are a normalised distribution per setting.
    probs = abb1.joint_probabilities()
    totals = {}
    for (a, x), p in probs.items():
        totals[x] = totals.get(x, 0.0) + p
    check(
        all(abs(t - 1.0) < 1e-9 for t in totals.values()),
        "joint probabilities normalise per setting",
    )

    print(f"\nsmoke test passed ({checks} checks)")


if __name__ == "__main__":
    main()
