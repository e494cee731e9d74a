"""Drive the command-line runner from Python.

Writes a small JSON config into a temporary directory, runs
``fedmax run`` and ``fedmax sweep`` through ``main`` and prints what
they produced.
"""

import json
import tempfile
from pathlib import Path

from fedmax.cli import main

config = {
    "algorithm": "codasca",
    "k_clients": 4,
    "partition": "heterogeneous",
    "data": {"source": "synthetic", "n": 2000, "d": 10, "imratio": 0.1, "cluster_count": 4},
    "test_fraction": 0.2,
    "schedule_mode": "practical",
    "practical": {"eta0": 0.01, "decay_every_t0": 500, "decay_factor": 3, "window_i": 16,
                  "total_iters": 1000, "prox_coeff": 0.01, "batch_m": 8},
    "seed": 0,
    "eval_every": 250,
    "codasca_output": "last",
}

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    config["output_path"] = str(tmp / "trace.csv")
    cfg_path = tmp / "config.json"
    cfg_path.write_text(json.dumps(config, indent=2))

    print("exit", main(["run", str(cfg_path)]))
    print((tmp / "trace.csv").read_text())
    print((tmp / "trace.csv.summary.json").read_text())

    print("exit", main(["sweep", str(cfg_path), "--i", "1,16,64", "--seeds", "0,1",
                        "--algorithms", "coda_plus,codasca"]))
    print((tmp / "trace.csv.sweep.csv").read_text())
