import json
import time

import numpy as np
import pytest

from latentlab import derive_stream

EXPERIMENTS = [
    "encoder-validity-linear",
    "encoder-validity-loglinear",
    "nn-separation-small-T",
    "nn-separation-large-T",
    "manifold-detect",
    "semisup-curve",
    "supervised-lower-bound",
    "oracle-fixtures",
]


@pytest.fixture
def rng():
    return derive_stream(12345, 0)


@pytest.fixture(scope="session")
def default_runs(tmp_path_factory):
    """Run every experiment once through the CLI with its bundled defaults."""
    from latentlab.cli import main

    root = tmp_path_factory.mktemp("runs")
    cfg = root / "seed.json"
    cfg.write_text(json.dumps({"seed": 0}))
    out = {}
    for name in EXPERIMENTS:
        start = time.perf_counter()
        rc = main(["run", name, "--config", str(cfg), "--out", str(root / "out")])
        elapsed = time.perf_counter() - start
        dirs = list((root / "out" / name).iterdir()) if rc == 0 else []
        summary = json.loads((dirs[0] / "summary.json").read_text()) if dirs else None
        out[name] = {"rc": rc, "seconds": elapsed, "summary": summary, "dir": dirs[0] if dirs else None}
    return out
