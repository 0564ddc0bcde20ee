"""Smoke test for the `spme` extension module.

Build first, either with `maturin develop -m crates/python/Cargo.toml` or
with cargo (see README). Exits 0 with a SKIP line when the module is absent.
"""

import csv
import json
import os
import sys
import tempfile

try:
    import spme
except ImportError:
    print("SKIP: spme extension not built")
    sys.exit(0)


def main():
    g = spme.Grid([1.0], [256])
    assert g.node_count == 257
    lam = spme.RobinLaplace(g, 1.0).eigenvalues(2)
    assert abs(lam[0] - 0.7402) < 2e-3, lam

    law = spme.Law("cubic", 0.1)
    assert law.validate(2000)
    x = law.resolvent(0.5, 1.0)
    assert abs(x + 0.5 * law.psi(x) - 1.0) < 1e-10

    cfg = {
        "domain": {"d": 1, "cells": [16]},
        "law": {"name": "cubic", "params": [0.1]},
        "time": {"horizon": 0.05, "steps": 5, "snapshots": 3},
        "replicas": 2,
    }
    out = json.loads(spme.simulate(json.dumps(cfg)))
    assert out["replicas"] == 2 and len(out["final"]) == 17

    try:
        spme.parse_config('{"domain": {"d": 1}, "law": {"name": "cubic"}, "operator": {"k": 1.0}}')
        raise AssertionError("expected a ValueError")
    except ValueError:
        pass

    # run directories carry a manifest naming every CSV and its header
    with tempfile.TemporaryDirectory() as tmp:
        run = spme.run("simulate", json.dumps(cfg), tmp)
        with open(os.path.join(run, "manifest.json")) as f:
            manifest = json.load(f)
        for name, header in manifest["files"].items():
            with open(os.path.join(run, name), newline="") as f:
                assert ",".join(next(csv.reader(f))) == header, name
        assert manifest["passed"]

    print("OK")


if __name__ == "__main__":
    main()
