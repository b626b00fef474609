import json
import subprocess
import sys

import pytest

from moab.cli import build_parser, main
from moab.data import load_csv, sidecar_path

SMALL = ["--classes", "10,10,10", "--epochs", "1", "--replicas", "2"]


def test_gen_data(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert main(["gen-data", "--classes", "4,5,6", "--seed", "3", "--out", str(out)]) == 0
    assert "15 samples" in capsys.readouterr().out
    assert sidecar_path(out).exists()
    assert [s.grade for s in load_csv(out)].count(2) == 6


def test_gen_data_is_seeded(tmp_path):
    for name in ("a", "b"):
        main(["gen-data", "--classes", "3,3,3", "--seed", "1", "--mode", "easy", "--out", str(tmp_path / f"{name}.csv")])
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.img").read_bytes() == (tmp_path / "b.img").read_bytes()


def test_train_and_export(tmp_path, capsys):
    run = tmp_path / "run"
    assert main(["train", "--fusion", "dbf", "--out", str(run)] + SMALL) == 0
    printed = capsys.readouterr().out
    assert printed.startswith("dbf: 1 fold(s)") and "f1_micro" in printed
    metrics = json.loads((run / "metrics.json").read_text())
    assert metrics["fusion"] == "dbf" and metrics["folds"] == 1

    data = tmp_path / "d.csv"
    main(["gen-data", "--classes", "2,2,2", "--out", str(data)])
    emb = tmp_path / "emb.csv"
    assert main(["export-embeddings", "--model-dir", str(run), "--data", str(data), "--out", str(emb)]) == 0
    lines = emb.read_text().splitlines()
    assert len(lines) == 7 and lines[0].split(",")[:3] == ["sample_id", "grade", "e0"]
    again = tmp_path / "emb2.csv"
    main(["export-embeddings", "--model-dir", str(run / "fold_00"), "--data", str(data), "--out", str(again)])
    assert again.read_bytes() == emb.read_bytes()


def test_train_from_dataset_file(tmp_path):
    data = tmp_path / "d.csv"
    main(["gen-data", "--classes", "6,6,6", "--out", str(data)])
    assert main(["train", "--fusion", "gene-only", "--data", str(data), "--out", str(tmp_path / "r")] + SMALL) == 0
    assert json.loads((tmp_path / "r" / "config.json").read_text())["data"] == str(data)


def test_repeat_train_identical_metrics(tmp_path):
    for name in ("a", "b"):
        main(["train", "--seed", "7", "--folds", "2", "--out", str(tmp_path / name)] + SMALL)
    assert (tmp_path / "a" / "metrics.json").read_bytes() == (tmp_path / "b" / "metrics.json").read_bytes()


def test_ablation(tmp_path, capsys):
    assert main(["ablation", "--hidden", "8", "--out", str(tmp_path)] + SMALL) == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert len(table) == 9
    assert [line.split("|")[1].strip() for line in table[2:]] == [
        "CNN (Image)",
        "MLP (Genes)",
        "Concatenation",
        "OAF",
        "DBF",
        "Standard Addition*",
        "MOAB",
    ]


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--epochs", "0"],
        ["train", "--folds", "20"],
        ["train", "--data", "/nonexistent.csv"],
        ["gen-data", "--noise", "-1"],
    ],
)
def test_errors_are_one_line(tmp_path, capsys, argv):
    assert main(argv + ["--out", str(tmp_path / "x")]) == 1
    err = capsys.readouterr().err
    assert err.startswith("moab: error: ") and err.count("\n") == 1


def test_export_without_model(tmp_path, capsys):
    data = tmp_path / "d.csv"
    main(["gen-data", "--classes", "1,1,1", "--out", str(data)])
    assert main(["export-embeddings", "--model-dir", str(tmp_path), "--data", str(data), "--out", "e.csv"]) == 1
    assert "no trained model" in capsys.readouterr().err


def test_malformed_dataset(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("sample_id,group_id,grade,g0\n")
    assert main(["train", "--data", str(bad), "--out", str(tmp_path / "r")] + SMALL) == 1
    assert "found 1" in capsys.readouterr().err


def test_argparse_rejects_unknown_fusion():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["train", "--fusion", "late", "--out", "x"])
    assert info.value.code == 2


def test_bad_class_counts():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["gen-data", "--classes", "1,2", "--out", "x"])


def test_module_entry_point(tmp_path):
    out = tmp_path / "d.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "moab", "gen-data", "--classes", "1,1,1", "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and out.exists()


def test_outputs_create_parent_directories(tmp_path):
    data = tmp_path / "nested" / "deeper" / "d.csv"
    assert main(["gen-data", "--classes", "2,2,2", "--out", str(data)]) == 0
    run = tmp_path / "run"
    main(["train", "--data", str(data), "--test-fraction", "0.5", "--out", str(run)] + SMALL)
    emb = tmp_path / "exports" / "e.csv"
    assert main(["export-embeddings", "--model-dir", str(run), "--data", str(data), "--out", str(emb)]) == 0
    assert len(emb.read_text().splitlines()) == 7
