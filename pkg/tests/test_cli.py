import csv
import json

import pytest

from trimsgd import cli
from trimsgd.errors import UsageError


def test_parse_one_override():
    c = cli.parse_cli(["train", "--config", "c.json", "--set", "rho=0.1"])
    assert c.subcommand == "train" and c.config_path == "c.json"
    assert c.overrides == [(["rho"], 0.1)]


def test_parse_flags():
    c = cli.parse_cli(["sweep", "--data-dir", "d", "--out", "o", "--trials", "3", "--seed", "9", "--jobs", "4",
                       "--set", "methods.Ours.eps=0.3", "--set", "dataset=EMNIST"])
    assert (c.data_dir, c.out_dir, c.trials, c.seed, c.jobs) == ("d", "o", 3, 9, 4)
    assert c.overrides == [(["methods", "Ours", "eps"], 0.3), (["dataset"], "EMNIST")]


@pytest.mark.parametrize("argv,token", [
    (["train", "--set", "bogus_key=1"], "bogus_key"),
    (["train", "--set", "methods.Ours.lr=1"], "methods.Ours.lr"),
    (["train", "--bogus-flag"], "--bogus-flag"),
    (["fit"], "fit"),
    (["train", "extra.csv"], "extra.csv"),
])
def test_usage_errors_name_the_token(argv, token):
    with pytest.raises(UsageError, match=token.replace(".", r"\.")):
        cli.parse_cli(argv)


def test_main_exit_codes(tmp_path, capsys):
    assert cli.main(["train", "--set", "bogus_key=1"]) == 2
    assert "bogus_key" in capsys.readouterr().err
    assert cli.main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    (tmp_path / "bad.json").write_text('{"epochz": 3}')
    assert cli.main(["train", "--config", str(tmp_path / "bad.json")]) == 2
    assert "epochz" in capsys.readouterr().err


def _config(tmp_path, fake_mnist, **kw):
    cfg = {"data_dir": str(fake_mnist), "hidden": 8, "epochs": 2, "trials": 2, "batch_size": 32,
           "rho_grid": [0.0, 0.05, 0.1], "eps_grid": [0.0, 0.2]}
    cfg.update(kw)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_load_config_layering(tmp_path, fake_mnist):
    path = _config(tmp_path, fake_mnist)
    c = cli.parse_cli(["train", "--config", path, "--set", "rho=0.1", "--set", "methods.Ours.eps=0.4",
                       "--trials", "5"])
    cfg = cli.load_config(c)
    assert cfg.rho == 0.1 and cfg.trials == 5 and cfg.hidden == 8
    assert cfg.methods["Ours"]["eps"] == 0.4 and cfg.methods["Ours"]["rho"] == 0.1


def test_train_outputs_and_determinism(tmp_path, fake_mnist):
    path = _config(tmp_path, fake_mnist)
    assert cli.main(["train", "--config", path, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["train", "--config", path, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("results.csv", "results.json", "curves.svg", "model_trial0.tgm", "model_trial1.tgm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_sweep_pins_overridden_axis(tmp_path, fake_mnist):
    path = _config(tmp_path, fake_mnist, trials=1, epochs=1)
    out = tmp_path / "s"
    assert cli.main(["sweep", "--config", path, "--set", "eps=0.2", "--out", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(float(r["rho"]), float(r["eps"])) for r in rows] == [(0.0, 0.2), (0.05, 0.2), (0.1, 0.2)]
    assert (out / "rho0.05_eps0.2" / "results.csv").exists()
    assert (out / "sweep.svg").exists()


def test_compare_and_plot(tmp_path, fake_mnist):
    path = _config(tmp_path, fake_mnist, trials=1, epochs=2,
                   methods={"SGD": {"rho": 0.0}, "Ours": {"rho": 0.1, "eps": 0.2}})
    out = tmp_path / "c"
    assert cli.main(["compare", "--config", path, "--out", str(out)]) == 0
    with open(out / "compare.csv") as fh:
        assert [r["method"] for r in csv.DictReader(fh)] == ["SGD", "Ours"]
    plot_out = tmp_path / "p"
    assert cli.main(["plot", str(out / "SGD" / "results.csv"), str(out / "Ours" / "results.csv"),
                     "--out", str(plot_out)]) == 0
    svg = (plot_out / "test_loss.svg").read_text()
    assert 'data-name="SGD"' in svg and 'data-name="Ours"' in svg
    assert cli.main(["plot", "--out", str(plot_out)]) == 2


def test_histogram_command(tmp_path, fake_mnist):
    path = _config(tmp_path, fake_mnist, trials=1, epochs=1, hist_bins=12, hist_rho=0.0)
    out = tmp_path / "h"
    assert cli.main(["histogram", "--config", path, "--out", str(out)]) == 0
    with open(out / "histogram.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    assert sum(int(r["count_original"]) for r in rows) == 200
    assert all(r["count_original"] == r["count_noised"] for r in rows)
    # second run reuses the saved model through the checkpoint key
    out2 = tmp_path / "h2"
    assert cli.main(["histogram", "--config", path, "--out", str(out2), "--set", "hist_rho=0.5",
                     "--set", f'checkpoint="{out / "model.tgm"}"']) == 0
    summary = json.loads((out2 / "histogram.json").read_text())
    assert summary["max_loss_noised"] >= summary["max_loss_original"]


def test_shipped_configs_are_valid():
    from pathlib import Path

    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert paths
    for path in paths:
        cfg = cli.load_config(cli.parse_cli(["train", "--config", str(path)]))
        assert cfg.dataset == "MNIST"
