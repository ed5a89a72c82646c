"""Smoke test for the `odflow` extension module.

Build first with `cargo build --release -p odflow-python`, then run
`python3 python/smoke_test.py`. Set ODFLOW_LIB to use a specific library.
"""

import os
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent

CONFIG = """
seed = 3
variants = ["X", "W4"]
aggregate_target = 16

[synth]
days = 12

[split]
train_days = 10
test_days = 2

[train]
epochs = 1
lr = 0.001

[model]
hidden_temporal = 4
hidden_spatial = 4
encoder_blocks = 1
decoder_blocks = 1
"""


def import_odflow(workdir):
    lib = os.environ.get("ODFLOW_LIB")
    candidates = [Path(lib)] if lib else [ROOT / "target" / p / "libodflow.so" for p in ("release", "debug")]
    found = [c for c in candidates if c.exists()]
    if not found:
        sys.exit("libodflow.so not found; run `cargo build --release -p odflow-python`")
    shutil.copy(max(found, key=lambda p: p.stat().st_mtime), Path(workdir) / "odflow.so")
    sys.path.insert(0, str(workdir))
    import odflow

    return odflow


def main():
    with tempfile.TemporaryDirectory() as tmp:
        odflow = import_odflow(tmp)

        assert len(odflow.variants()) == 15
        assert odflow.variant_columns("X")[:4] == ["Y(t-7d)", "Y(t-1d)", "Y(t-2)", "Y(t-1)"], odflow.variant_columns("X")
        assert abs(odflow.mse([1.0, 2.0], [0.0, 0.0]) - 2.5) < 1e-12
        assert abs(odflow.mape([1.0, 5.0], [2.0, 0.0]) - 0.5) < 1e-12

        try:
            odflow.RunConfig.from_toml('variants = ["W9"]')
            raise AssertionError("W9 accepted")
        except ValueError as e:
            assert "W9" in str(e)

        cfg = odflow.RunConfig.from_toml(CONFIG)
        cfg.out_dir = str(Path(tmp) / "run")
        assert cfg.seed == 3 and cfg.variants == ["X", "W4"]

        pipe = odflow.Pipeline(cfg)
        try:
            pipe.run("graphs")
            raise AssertionError("graphs ran before aggregate")
        except ValueError as e:
            assert "aggregate" in str(e)

        report = pipe.run("all")
        assert "Overall performance" in report, report

        out = Path(cfg.out_dir)
        rows = odflow.read_metrics(str(out / "eval" / "metrics.csv"))
        assert {r["variant"] for r in rows} == {"X", "W4"}
        assert all(r["mse"] is None or r["mse"] >= 0 for r in rows)
        assert odflow.render_report(str(out / "eval" / "metrics.csv")) == report

        model = odflow.Model.load(str(out / "models" / "W4.json"))
        assert model.variant == "W4" and model.n_features == 5

        zones = odflow.Partition.load(str(out / "aggregate" / "zones.geojson"))
        assert len(zones) == 16
        assert len(zones.aggregate_to(4)) == 4

    print("odflow smoke test passed")


if __name__ == "__main__":
    main()
