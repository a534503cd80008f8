import numpy as np
import pytest

from lepfer.cli import EXIT_CONFIG, EXIT_DATA, apply_config, build_parser, main
from lepfer.confidence import ConfidenceNetwork
from lepfer.data import read_image, write_pgm
from lepfer.forest import LocalForest
from lepfer.mesh import read_landmarks, write_landmarks
from lepfer.pipeline import Predictor


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(root / "ds"), "--subjects", "3", "--per-class", "1", "--seed", "2"]) == 0
    assert main(["synth", "--out", str(root / "toy"), "--subjects", "3", "--per-class", "1",
                 "--scheme", "toy5"]) == 0
    man = str(root / "ds" / "manifest.csv")
    assert main(["train-lep", man, "-o", str(root / "m.lepf"), "--trees", "4", "--seed", "1",
                 "--jobs", "1", "--report", str(root / "rep.txt")]) == 0
    return root, man


def _lines(path):
    return path.read_text().splitlines()


def test_seed_replay_identical_bytes(work, tmp_path):
    root, man = work
    assert main(["train-lep", man, "-o", str(tmp_path / "a"), "--trees", "4", "--seed", "1",
                 "--jobs", "1", "--report", str(tmp_path / "r")]) == 0
    assert (tmp_path / "a").read_bytes() == (root / "m.lepf").read_bytes()
    assert (tmp_path / "r").read_text() == (root / "rep.txt").read_text()


def test_missing_manifest_exit(tmp_path):
    assert main(["train-lep", str(tmp_path / "nope.txt"), "-o", str(tmp_path / "x")]) == EXIT_DATA


def test_missing_grouping_exit(work, tmp_path):
    _, man = work
    rc = main(["train-ae", man, "--grouping", str(tmp_path / "none.txt"), "-o", str(tmp_path / "n")])
    assert rc == EXIT_CONFIG


def test_empty_sweep_exit(work):
    root, man = work
    assert main(["eval", man, "--lep", f"0.1={root / 'm.lepf'}", "--regions", ","]) == EXIT_CONFIG
    assert main(["eval", man]) == EXIT_CONFIG


def test_scheme_mismatch_exit(work, tmp_path):
    root, _ = work
    toy = root / "toy"
    rc = main(["predict", "--model", str(root / "m.lepf"), "--image", str(toy / "images/00000.pgm"),
               "--landmarks", str(toy / "landmarks/00000.txt"), "--report", str(tmp_path / "p")])
    assert rc == EXIT_CONFIG
    rc = main(["eval", str(toy / "manifest.csv"), "--lep", f"0.1={root / 'm.lepf'}", "-o", str(tmp_path / "e")])
    assert rc == EXIT_CONFIG


def test_unknown_config_key(work, tmp_path):
    _, man = work
    cfg = tmp_path / "c.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["train-lep", man, "-o", str(tmp_path / "x"), "--config", str(cfg)]) == EXIT_CONFIG


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# forest settings\ntrees = 7\nlocality = 0.2\nglobal = yes\n")

    def parse(*extra):
        argv = ["train-lep", "m.txt", "-o", "x", "--config", str(cfg), *extra]
        parser = build_parser()
        apply_config(parser, argv)
        return parser.parse_args(argv)

    a = parse("--trees", "3")
    assert (a.trees, a.locality, a.global_) == (3, 0.2, True)
    plain = build_parser().parse_args(["train-lep", "m.txt", "-o", "x"])
    assert (plain.trees, plain.locality, plain.global_) == (1000, 0.1, False)


@pytest.mark.parametrize("command,flags", [
    ("train-lep", {"--trees": "1000", "--locality": "0.1", "--thresholds": "25"}),
    ("train-ae", {"--updates": "15000", "--lr": "0.01", "--weight-decay": "0.001", "--masking": "0.25"}),
    ("train-au", {"--trees": "50", "--candidates": "100"}),
    ("occlude", {"--margin": "20"}),
    ("eval", {"--margin": "20"}),
])
def test_help_lists_defaults(command, flags, capsys):
    assert main([command, "--help"]) == 0
    text = " ".join(capsys.readouterr().out.split())
    for flag, default in flags.items():
        assert flag in text
        assert f"default: {default}" in text


def _report_table(text, header):
    lines = text.splitlines()
    k = lines.index(header)
    rows = []
    for line in lines[k + 1:]:
        if not line:
            break
        rows.append(line.split(","))
    return rows


def test_predict_without_network(work, tmp_path):
    root, _ = work
    img, lm = root / "ds/images/00004.pgm", root / "ds/landmarks/00004.txt"
    out = tmp_path / "rep.csv"
    assert main(["predict", "--model", str(root / "m.lepf"), "--image", str(img), "--landmarks", str(lm),
                 "--report", str(out), "--timing", str(tmp_path / "t")]) == 0
    text = out.read_text()
    assert "alpha" not in text and "wls" not in text
    forest = LocalForest.load(root / "m.lepf")
    pred = Predictor(forest).predict(read_image(img), read_landmarks(lm, "ls49"))
    probs = np.array([float(r[1]) for r in _report_table(text, "class,ls")])
    np.testing.assert_array_equal(probs, pred.ls.probs)
    assert text == pred.report()
    assert "total" in (tmp_path / "t").read_text()


def test_predict_with_network(work, tmp_path):
    root, man = work
    net = tmp_path / "n.net"
    assert main(["train-ae", man, "--grouping", "builtin", "-o", str(net), "--updates", "300",
                 "--jobs", "1"]) == 0
    img, lm = root / "ds/images/00002.pgm", root / "ds/landmarks/00002.txt"
    out = tmp_path / "rep.csv"
    assert main(["predict", "--model", str(root / "m.lepf"), "--network", str(net), "--image", str(img),
                 "--landmarks", str(lm), "--report", str(out), "--timing", str(tmp_path / "t")]) == 0
    pred = Predictor(LocalForest.load(root / "m.lepf"), ConfidenceNetwork.load(net)).predict(
        read_image(img), read_landmarks(lm, "ls49"))
    assert out.read_text() == pred.report()
    assert len(_report_table(out.read_text(), "landmark,alpha")) == 49


def test_occlude_command(work, tmp_path):
    root, _ = work
    img, lm = root / "ds/images/00000.pgm", root / "ds/landmarks/00000.txt"
    out = tmp_path / "o.pgm"
    assert main(["occlude", "--image", str(img), "--landmarks", str(lm), "--region", "mouth",
                 "-o", str(out), "--margin", "5"]) == 0
    a, b = read_image(img), read_image(out)
    assert a.shape == b.shape and np.any(a != b)
    assert main(["occlude", "--image", str(tmp_path / "none.pgm"), "--landmarks", str(lm),
                 "--region", "eyes", "-o", str(out)]) == EXIT_DATA


def test_eval_sweep_csv(work, tmp_path):
    root, man = work
    out = tmp_path / "s.csv"
    assert main(["eval", man, "--lep", f"0.1={root / 'm.lepf'}", "--regions", "none,eyes", "--margin", "4",
                 "-o", str(out)]) == 0
    lines = _lines(out)
    assert len(lines) == 1 + 1 * 2 * 1
