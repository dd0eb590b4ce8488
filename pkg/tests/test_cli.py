import numpy as np
import pytest

from bfinet import layers
from bfinet.cli import main, read_config, ConfigError


@pytest.fixture
def config(tmp_path, make_csv):
    data = make_csv(n=120, d=6, classes=3)

    def write(name="exp.ini", **sections):
        base = {
            "data": {"path": data, "train_fraction": 0.5, "split_seed": 1},
            "model": {"C": 2, "K": 2, "L": 1, "hidden": 8, "variant": "P", "seed": 3},
            "train": {"optimizer": "adam", "lr": 0.01, "batch": 16, "epochs": 3, "seed": 4},
            "output": {"dir": tmp_path / "out", "timing": "false"},
        }
        for sec, kv in sections.items():
            base.setdefault(sec, {}).update(kv)
        lines = []
        for sec, kv in base.items():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in kv.items() if v is not None]
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n")
        return path
    return write


def test_train_writes_metrics_and_checkpoint(config, tmp_path):
    assert main(["train", str(config())]) == 0
    rows = (tmp_path / "out" / "P_K2_C2_L1.csv").read_text().splitlines()
    assert len(rows) == 1 + 3
    assert (tmp_path / "out" / "P_K2_C2_L1.bfic").read_bytes()[:4] == b"BFIC"


def test_train_missing_data_exits_2(config, tmp_path, capsys):
    assert main(["train", str(config(data={"path": tmp_path / "missing.csv"}))]) == 2
    assert capsys.readouterr().err.startswith("bfinet: error=data ")


@pytest.mark.parametrize("sections", [
    {"model": {"bogus": 1}},
    {"model": {"variant": "Z"}},
    {"train": {"lr": "fast"}},
    {"model": {"K": 9}},
    {"extra": {"x": 1}},
])
def test_config_errors_exit_1(config, sections, capsys):
    assert main(["train", str(config(**sections))]) == 1
    err = capsys.readouterr().err
    assert err.startswith("bfinet: error=config ") and err.count("\n") == 1


def test_divergence_exits_3(config, capsys):
    with np.errstate(all="ignore"):
        code = main(["train", str(config(train={"optimizer": "sgd", "lr": 1e37}))])
    assert code == 3
    assert "error=divergence" in capsys.readouterr().err


def test_p_k1_and_baseline_metrics_byte_identical(config, tmp_path):
    assert main(["train", str(config(model={"variant": "P", "K": 1}))]) == 0
    assert main(["train", str(config(model={"variant": "Baseline", "K": 1}))]) == 0
    out = tmp_path / "out"
    assert (out / "P_K1_C2_L1.csv").read_bytes() == (out / "Baseline_K1_C2_L1.csv").read_bytes()


def test_overrides(config, tmp_path):
    cfg = read_config(config(), ["model.C=1", "train.epochs=1"])
    assert cfg["model"]["C"] == 1 and cfg["train"]["epochs"] == 1
    with pytest.raises(ConfigError):
        read_config(config(), ["nosection"])


def test_sweep_grid_and_summary(config, tmp_path):
    path = str(config())
    args = ["sweep", path, "--variants", "Baseline,P", "--K", "3", "--C", "1-3", "--L", "2"]
    assert main(args) == 0
    out = tmp_path / "out"
    metrics = sorted(p.name for p in out.glob("*_C*_L*.csv"))
    assert metrics == ["Baseline_K1_C1_L2.csv", "Baseline_K1_C2_L2.csv", "Baseline_K1_C3_L2.csv",
                       "P_K3_C1_L2.csv", "P_K3_C2_L2.csv", "P_K3_C3_L2.csv"]
    summary = (out / "summary.csv").read_bytes()
    assert len(summary.decode().splitlines()) == 1 + 6
    assert main(args) == 0
    assert (out / "summary.csv").read_bytes() == summary


def test_sweep_rejects_bad_grid_before_training(config, tmp_path):
    code = main(["sweep", str(config(model={"D": 6})), "--variants", "P", "--K", "2,7"])
    assert code == 1
    assert not (tmp_path / "out").exists()


def test_sweep_parallel_matches_serial(config, tmp_path):
    path = str(config())
    grid = ["--variants", "Baseline,T", "--K", "2", "--C", "1,2", "--L", "1"]
    assert main(["sweep", path, *grid]) == 0
    serial = (tmp_path / "out" / "summary.csv").read_bytes()
    assert main(["sweep", path, *grid, "--jobs", "2"]) == 0
    assert (tmp_path / "out" / "summary.csv").read_bytes() == serial


def cost_table(capsys):
    lines = capsys.readouterr().out.strip().splitlines()
    header = lines[0].split()
    return [dict(zip(header, line.split())) for line in lines[1:]]


def test_cost_table(config, capsys):
    assert main(["cost", str(config(model={"D": 54, "M": 7, "K": 3, "C": 1})), "--all-variants"]) == 0
    rows = {r["variant"]: r for r in cost_table(capsys)}
    assert [rows[v]["cross_params"] for v in ("Baseline", "P", "T")] == ["2970", "1026", "342"]
    assert main(["cost", str(config(model={"D": 1024, "K": 8, "variant": "P"}))]) == 0
    assert cost_table(capsys)[0]["cross_flops_per_layer"] == "131072"


def test_cost_k1_row_equals_baseline(config, capsys):
    assert main(["cost", str(config(model={"D": 54, "K": 1, "C": 2})), "--all-variants"]) == 0
    rows = cost_table(capsys)
    strip = lambda r: {k: v for k, v in r.items() if k != "variant"}
    assert all(strip(r) == strip(rows[0]) for r in rows)


def test_cost_requires_d(config):
    assert main(["cost", str(config())]) == 1


def test_gradcheck_command(tmp_path, capsys):
    assert main(["gradcheck", "--csv", str(tmp_path / "g.csv")]) == 0
    first = capsys.readouterr().out
    assert first.count("PASS") == 5
    assert main(["gradcheck"]) == 0
    assert capsys.readouterr().out == first
    assert (tmp_path / "g.csv").read_text().startswith("model,buffer,")


def test_gradcheck_detects_corrupted_backward(monkeypatch, capsys):
    real = layers.dense_backward

    def flipped(p, tape, grad_out):
        gW, gb, gx = real(p, tape, grad_out)
        return gW, -gb, gx

    monkeypatch.setattr(layers, "dense_backward", flipped)
    assert main(["gradcheck", "--variant", "S"]) == 4
    assert "error=gradcheck" in capsys.readouterr().err
