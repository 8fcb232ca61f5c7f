"""End-to-end checks of the command line front end."""

import json
import subprocess
import sys

import numpy as np
import pytest

from holderlab import __version__
from holderlab.cli import (
    config_hash,
    main,
    normalize_config,
    parse_records_csv,
)
from holderlab.errors import ConfigError

BASE = {
    "problem": "conductivity",
    "seed": 7,
    "mesh": {"n_sub": 8, "grid_cols": 2, "grid_rows": 1},
    "sweep": {"n_random_pairs": 8, "n_rays": 2, "n_ray_steps": 4},
}


def write_config(tmp_path, extra=None, name="cfg.json"):
    cfg = json.loads(json.dumps(BASE))
    if extra:
        cfg.update(extra)
    cfg["output_dir"] = str(tmp_path / "out")
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_normalize_fills_defaults():
    cfg = normalize_config(json.loads(json.dumps(BASE)))
    assert cfg["recovered_cells"] == [1, 2]
    assert cfg["fit"] == {"n_bins": 8, "slack": 0.1}
    assert cfg["select"]["target_ratio"] == 0.5
    assert cfg["probe_k"] is None
    assert cfg["mesh"]["side"] == "bottom"


def test_normalize_rejects_bad_fields():
    for patch, field in [
        ({"problem": "heat"}, "problem"),
        ({"seed": "7"}, "seed"),
        ({"mesh": {"n_sub": 7, "grid_cols": 2}}, "mesh.n_sub"),
        ({"mesh": {"n_sub": 8, "side": "inside"}}, "mesh.side"),
        ({"recovered_cells": [0]}, "recovered_cells"),
        ({"recovered_cells": [1, 1]}, "recovered_cells"),
        ({"compact_set": {"lambda_lo": 2.0, "lambda_hi": 0.5}}, "compact_set.lambda_lo"),
        ({"select": {"target_ratio": 0.0}}, "select.target_ratio"),
        ({"typo_section": {}}, "typo_section"),
    ]:
        raw = json.loads(json.dumps(BASE))
        raw.update(patch)
        with pytest.raises(ConfigError) as err:
            normalize_config(raw)
        assert err.value.field == field


def test_missing_seed_is_rejected():
    raw = json.loads(json.dumps(BASE))
    del raw["seed"]
    with pytest.raises(ConfigError) as err:
        normalize_config(raw)
    assert err.value.field == "seed"


def test_config_hash_ignores_key_order():
    a = normalize_config(json.loads(json.dumps(BASE)))
    flipped = dict(reversed(list(a.items())))
    assert config_hash(a) == config_hash(flipped)
    b = normalize_config({**json.loads(json.dumps(BASE)), "seed": 8})
    assert config_hash(a) != config_hash(b)


def test_missing_config_file_exits_2(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert main(["validate", str(missing)]) == 2
    assert "nope.json" in capsys.readouterr().err


def test_invalid_json_exits_2(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{ not json")
    assert main(["validate", str(path)]) == 2
    assert "line" in capsys.readouterr().err


def test_bad_field_exits_2_and_names_field(tmp_path, capsys):
    path = write_config(tmp_path, {"recovered_cells": [1, 3]})
    assert main(["validate", str(path)]) == 2
    assert "recovered_cells" in capsys.readouterr().err


def test_validate_echoes_normalized_config(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["validate", str(path)]) == 0
    echoed = json.loads(capsys.readouterr().out)
    assert echoed["recovered_cells"] == [1, 2]
    assert echoed["sweep"]["t_min"] == 1e-6


def test_mesh_output_has_header(tmp_path):
    path = write_config(tmp_path)
    assert main(["mesh", str(path)]) == 0
    lines = (tmp_path / "out" / "mesh.txt").read_text().splitlines()
    assert lines[0].startswith("# holderlab %s config=" % __version__)
    assert "seed=7" in lines[0]


def test_sweep_is_thread_count_invariant(tmp_path):
    path = write_config(tmp_path)
    assert main(["sweep", str(path), "--threads", "1"]) == 0
    one = (tmp_path / "out" / "records.csv").read_bytes()
    assert main(["sweep", str(path), "--threads", "3"]) == 0
    three = (tmp_path / "out" / "records.csv").read_bytes()
    assert one == three


def test_sweep_records_roundtrip(tmp_path):
    path = write_config(tmp_path)
    assert main(["sweep", str(path)]) == 0
    records, head, dropped = parse_records_csv(str(tmp_path / "out" / "records.csv"))
    assert dropped == 0
    assert head["seed"] == "7"
    assert len(records) == 8 + 2 * 4
    kinds = {r.kind for r in records}
    assert kinds == {"random_random", "near_diagonal"}
    rays = [r for r in records if r.kind == "near_diagonal"]
    assert all(r.t is not None for r in rays)


def test_fit_on_exact_power_law(tmp_path):
    rows = ["pair_id,kind,t,delta_R,delta_F,phi,delta_finite,flags"]
    for i, df in enumerate(np.geomspace(1e-6, 1e-1, 40)):
        rows.append(
            "%d,random_random,,%r,%r,0.0,," % (i, float(np.sqrt(df)), float(df))
        )
    csv_path = tmp_path / "records.csv"
    csv_path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "fit.json"
    assert main(["fit", str(csv_path), "--out", str(out)]) == 0
    body = json.loads(out.read_text().split("\n", 1)[1])
    assert abs(body["theta"] - 0.5) <= 1e-6
    assert body["records_used"] == 40
    assert body["dropped"] == 0


def test_fit_report_carries_sweep_header(tmp_path):
    path = write_config(tmp_path)
    assert main(["sweep", str(path)]) == 0
    records_path = tmp_path / "out" / "records.csv"
    assert main(["fit", str(records_path)]) == 0
    fit_head = (tmp_path / "out" / "fit.json").read_text().splitlines()[0]
    sweep_head = records_path.read_text().splitlines()[0]
    assert fit_head == sweep_head


def test_select_writes_pairs_within_dim(tmp_path):
    path = write_config(tmp_path)
    assert main(["select", str(path)]) == 0
    lines = (tmp_path / "out" / "selection.csv").read_text().splitlines()
    assert lines[2] == "i,j"
    pairs = [tuple(map(int, ln.split(","))) for ln in lines[3:]]
    assert pairs
    # bottom patch on an 8-subdivision mesh gives an 8-current basis
    assert all(0 <= i <= j < 8 for i, j in pairs)


def test_counterexample_table_has_both_maps(tmp_path):
    path = write_config(tmp_path, {"counterexample": {"n_points": 5}})
    assert main(["counterexample", str(path)]) == 0
    text = (tmp_path / "out" / "counterexample.csv").read_text()
    assert text.count("\nflat,") == 5
    assert text.count("\ncubic,") == 5


def test_module_runs_as_script(tmp_path):
    path = write_config(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "holderlab.cli", "validate", str(path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["seed"] == 7
