import csv

import numpy as np
import pytest

from arnet.cli import ABLATION_VARIANTS, main
from arnet.motion import load_dataset, read_motion_file
from arnet.training import TrainConfig, load_checkpoint, parameter_digest, train_loop

SMALL = "d_hidden=8\nblocks=1\nnoise_dim=4\ngen_hidden=8\ndisc_hidden=8\nbatch_size=16\n"


@pytest.fixture
def data(tmp_path):
    out = tmp_path / "data"
    assert main(["synth", "--seed", "1", "--subjects", "2", "--windows", "12",
                 "--channels", "6", "--out", str(out)]) == 0
    return out


@pytest.fixture
def cfg_file(tmp_path):
    f = tmp_path / "small.cfg"
    f.write_text(SMALL)
    return f


def test_synth_then_eval_untrained(tmp_path, data, cfg_file, capsys):
    ck = tmp_path / "m.arn"
    assert main(["train", "--data", str(data), "--config", str(cfg_file), "--epochs", "0",
                 "--out", str(ck)]) == 0
    assert main(["eval", "--ckpt", str(ck), "--data", str(data), "--csv", str(tmp_path / "r.csv"),
                 "--baseline"]) == 0
    out = capsys.readouterr().out
    assert "zero-velocity" in out and "average" in out
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["action", "horizon_ms", "mae"] and len(rows) == 1 + 2 * 4


def test_predict_round_trip(tmp_path, data, cfg_file):
    ck = tmp_path / "m.arn"
    assert main(["train", "--data", str(data), "--config", str(cfg_file), "--epochs", "1",
                 "--out", str(ck)]) == 0
    src = next((data).rglob("*.csv"))
    out = tmp_path / "pred.csv"
    assert main(["predict", "--ckpt", str(ck), "--input", str(src), "--frames", "7",
                 "--out", str(out)]) == 0
    seq = read_motion_file(out)
    assert seq.n_frames == 7 and seq.n_channels == 6
    assert np.all(np.isfinite(seq.values))
    assert main(["predict", "--ckpt", str(ck), "--input", str(src), "--frames", "11",
                 "--out", str(out)]) == 2


def test_no_adversarial_flag_equals_gamma_zero(tmp_path, data, cfg_file):
    ck = tmp_path / "m.arn"
    log = tmp_path / "m.csv"
    assert main(["train", "--data", str(data), "--config", str(cfg_file), "--epochs", "2",
                 "--seed", "4", "--no-adversarial", "--out", str(ck), "--log", str(log)]) == 0
    ds = load_dataset(data, 10, 10)
    cfg = TrainConfig(d_hidden=8, blocks=1, noise_dim=4, gen_hidden=8, disc_hidden=8,
                      batch_size=16, epochs=2, seed=4, gamma=0.0)
    res = train_loop(ds, cfg, log_path=tmp_path / "p.csv")
    assert log.read_bytes() == (tmp_path / "p.csv").read_bytes()
    assert parameter_digest(load_checkpoint(ck).model.parameters()) == \
        parameter_digest(res.state.model.parameters())


def test_flags_override_config_file(tmp_path, data, cfg_file):
    f = tmp_path / "c.cfg"
    f.write_text(SMALL + "epochs=5\nseed=9\n")
    ck = tmp_path / "m.arn"
    assert main(["train", "--data", str(data), "--config", str(f), "--epochs", "1",
                 "--out", str(ck)]) == 0
    st = load_checkpoint(ck)
    assert st.config.epochs == 1 and st.config.seed == 9 and st.config.d_hidden == 8


def test_config_file_supplies_flag_values(tmp_path, data, cfg_file):
    f = tmp_path / "c.cfg"
    f.write_text(SMALL + f"data={data}\nout={tmp_path / 'm.arn'}\nepochs=1\nplain-stack=true\n")
    assert main(["train", "--config", str(f)]) == 0
    assert load_checkpoint(tmp_path / "m.arn").config.plain_stack


def test_stages_and_plain_stack_flags(tmp_path, data, cfg_file):
    for extra, stages, plain in ((["--stages", "3"], 3, False), (["--plain-stack"], 2, True)):
        ck = tmp_path / "m.arn"
        assert main(["train", "--data", str(data), "--config", str(cfg_file), "--epochs", "1",
                     "--out", str(ck)] + extra) == 0
        st = load_checkpoint(ck)
        assert (st.config.stages, st.config.plain_stack) == (stages, plain)
        assert len(st.model.stages) == stages - 1


def test_ablate_writes_table(tmp_path, data, cfg_file):
    out = tmp_path / "t.csv"
    assert main(["ablate", "--data", str(data), "--config", str(cfg_file), "--epochs", "1",
                 "--variants", "1-stage CoarseNet,2-stage ARNet", "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["model", "80", "160", "320", "400"]
    assert [r[0] for r in rows[1:]] == ["1-stage CoarseNet", "2-stage ARNet"]
    assert main(["ablate", "--data", str(data), "--variants", "nope", "--out", str(out)]) == 2
    assert set(ABLATION_VARIANTS) >= {"2-stage RefineNet", "4-stage ARNet"}


def test_export_window(tmp_path, data, cfg_file):
    ck = tmp_path / "m.arn"
    main(["train", "--data", str(data), "--config", str(cfg_file), "--epochs", "0", "--out", str(ck)])
    out = tmp_path / "w.csv"
    assert main(["export", "--ckpt", str(ck), "--data", str(data), "--index", "3",
                 "--out", str(out)]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0][:2] == ["frame", "source"] and len(rows) == 1 + 3 * 20


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["train", "--nope"], ["train", "--data", "x"], ["eval", "--horizons", "a,b"],
    ["synth", "--seed", "x", "--out", "o"],
])
def test_usage_errors_exit_one(argv, capsys):
    assert main(argv) == 1
    assert capsys.readouterr().err


def test_data_errors_exit_two(tmp_path, data):
    bad = tmp_path / "bad.arn"
    bad.write_bytes(b"nope")
    assert main(["eval", "--ckpt", str(bad), "--data", str(data)]) == 2
    assert main(["train", "--data", str(tmp_path / "missing"), "--out", str(bad)]) == 2
    broken = tmp_path / "broken"
    (broken / "0" / "0").mkdir(parents=True)
    (broken / "0" / "0" / "0.csv").write_text("c0,c1,c2\n1,2,x\n")
    assert main(["train", "--data", str(broken), "--out", str(bad)]) == 2


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exits_three(tmp_path, data, cfg_file):
    f = tmp_path / "c.cfg"
    f.write_text(SMALL + "lr=1e30\nepochs=3\n")
    assert main(["train", "--data", str(data), "--config", str(f),
                 "--out", str(tmp_path / "m.arn")]) == 3
