import json

import numpy as np
import pytest

from salrank import io as sio
from salrank.cli import build_parser, main
from salrank.synthetic import write_corpus

SUBCOMMANDS = ["generate", "eval-rank", "eval-detect", "sweep", "ablate", "stats", "validate", "synth"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    write_corpus(root, n_images=6, seed=2)
    return root


def run(argv):
    return main([str(a) for a in argv])


class TestParser:
    @pytest.mark.parametrize("cmd", SUBCOMMANDS)
    def test_help_exits_zero(self, cmd, capsys):
        assert run([cmd, "--help"]) == 0
        out = capsys.readouterr().out
        assert "--threads" in out and "--root" in out

    def test_help_documents_all_flags(self, capsys):
        parser = build_parser()
        sub = next(a for a in parser._actions if a.dest == "command")
        for name, p in sub.choices.items():
            run([name, "--help"])
            text = capsys.readouterr().out
            for action in p._actions:
                for opt in action.option_strings:
                    assert opt in text, (name, opt)

    def test_unknown_flag(self, capsys):
        assert run(["generate", "--bogus"]) == 1
        assert "usage" in capsys.readouterr().err

    def test_no_command(self, capsys):
        assert run([]) == 1


class TestGenerate:
    @pytest.mark.parametrize("preset, expected", [
        ("v1", dict(sigma=10.5, mu=80, xi=5, ell=0.4, gamma=0.65, alpha1=0.4, alpha2=0.7)),
        ("v2", dict(sigma=10.5, mu=80, xi=5, ell=0.7, gamma=0.65, alpha1=0.4, alpha2=0.9)),
    ])
    def test_presets(self, corpus, tmp_path, preset, expected, capsys):
        out = tmp_path / preset
        assert run(["generate", "--manifest", corpus / "manifest.json", "--out", out,
                     "--preset", preset]) == 0
        cfg = json.loads((out / "report.json").read_text())["config"]
        assert {k: cfg[k] for k in expected} == expected
        assert "accepted=" in capsys.readouterr().out

    def test_flag_overrides(self, corpus, tmp_path):
        out = tmp_path / "o"
        assert run(["generate", "--manifest", corpus / "manifest.json", "--out", out,
                     "--preset", "v2", "--ell", "0.1", "--setting", "absolute"]) == 0
        cfg = json.loads((out / "report.json").read_text())["config"]
        assert cfg["ell"] == 0.1 and cfg["alpha2"] == 0.9 and cfg["setting"] == "absolute"

    def test_bad_parameter(self, corpus, tmp_path, capsys):
        assert run(["generate", "--manifest", corpus / "manifest.json", "--out", tmp_path,
                     "--sigma", "-1"]) == 1
        assert "sigma" in capsys.readouterr().err

    def test_missing_manifest(self, tmp_path):
        assert run(["generate", "--manifest", tmp_path / "nope.json", "--out", tmp_path]) == 1


class TestEval:
    def test_rank_and_detect(self, corpus, tmp_path, capsys):
        assert run(["eval-rank", "--root", corpus, "--pred", "pred", "--gt", "reference",
                     "--instances", "instances", "--out", tmp_path / "rank.json"]) == 0
        rep = json.loads((tmp_path / "rank.json").read_text())
        assert 0 <= rep["dataset_sor"] <= 1
        assert (tmp_path / "rank.csv").exists() and (tmp_path / "rank.png").exists()
        assert run(["eval-detect", "--root", corpus, "--pred", "pred", "--observers", "observers",
                     "--out", tmp_path / "det.json", "--curves", tmp_path / "curves"]) == 0
        det = json.loads((tmp_path / "det.json").read_text())
        assert det["evaluated"] + det["failed"] == 6
        assert len(sio.read_table(tmp_path / "curves" / "mean.csv")) == 255
        assert (tmp_path / "curves" / "curves.png").exists()

    def test_env_root(self, corpus, tmp_path, monkeypatch):
        monkeypatch.setenv("SALRANK_ROOT", str(corpus))
        assert run(["eval-rank", "--pred", "pred", "--gt", "reference", "--instances", "instances",
                     "--out", tmp_path / "r.json", "--no-figures"]) == 0
        assert not (tmp_path / "r.png").exists()


class TestAnalysisCommands:
    def test_sweep(self, corpus, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        assert run(["sweep", "--corpus", corpus / "manifest.json", "--axis", "alpha",
                     "--values", "1,0.3", "--out", out]) == 0
        rows = sio.read_table(out)
        assert [r["value"] for r in rows] == ["1", "0.3"]
        assert out.with_suffix(".png").exists()

    def test_sweep_bad_values(self, corpus, tmp_path):
        assert run(["sweep", "--corpus", corpus / "manifest.json", "--axis", "alpha",
                     "--values", "x", "--out", tmp_path / "s.csv"]) == 1

    def test_ablate(self, corpus, capsys):
        assert run(["ablate", "--corpus", corpus / "manifest.json", "--remove", "0"]) == 0
        assert "sor=1" in capsys.readouterr().out
        assert run(["ablate", "--corpus", corpus / "manifest.json", "--remove", "12"]) == 1

    def test_stats(self, corpus, tmp_path, capsys):
        out = tmp_path / "stats.csv"
        assert run(["stats", "--corpus", corpus / "reference", "--out", out]) == 0
        rows = sio.read_table(out)
        assert sum(int(r["images_with_rank_count"]) for r in rows) == 6
        assert out.with_suffix(".sizes.csv").exists()


class TestValidate:
    def _stack(self, corpus, tmp_path):
        out = tmp_path / "g"
        run(["generate", "--manifest", corpus / "manifest.json", "--out", out, "--ell", "0"])
        rep = json.loads((out / "report.json").read_text())
        eid = next(e["id"] for e in rep["entries"] if e["status"] == "accepted")
        return out / eid

    def test_ok(self, corpus, tmp_path, capsys):
        stem = self._stack(corpus, tmp_path)
        assert run(["validate", "--stack", stem]) == 0
        assert "ok:" in capsys.readouterr().out

    def test_corrupted(self, corpus, tmp_path, capsys):
        stem = self._stack(corpus, tmp_path)
        s1 = sio.read_png(stem.with_name(stem.name + ".slice1.png"))
        p2 = stem.with_name(stem.name + ".slice2.png")
        s2 = sio.read_png(p2)
        y, x = np.argwhere(s1 == 255)[0]
        s2[y, x] = 0
        sio.write_png(s2, p2)
        capsys.readouterr()
        assert run(["validate", "--stack", stem]) == 1
        assert "slice 1 and slice 2" in capsys.readouterr().err


def test_thread_invariance(corpus, tmp_path):
    outs = []
    for t in (1, 8):
        d = tmp_path / f"t{t}"
        run(["generate", "--manifest", corpus / "manifest.json", "--out", d / "gen", "--threads", t])
        run(["eval-detect", "--root", corpus, "--pred", "pred", "--observers", "observers",
              "--out", d / "det.json", "--curves", d / "curves", "--threads", t])
        outs.append({p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()})
    assert outs[0] == outs[1]
