import numpy as np
import pytest
import yaml

from prosoparse import cli
from prosoparse.corpus import content_hash, load_feature_cache, save_feature_cache
from prosoparse.synthdata import overfit_corpus, write_corpus
from prosoparse.treebank import read_tree_file, write_tree_file


class TestFeaturize:
    def test_attaches_prosody_everywhere(self, featurized_corpus):
        for sent in featurized_corpus.sentences:
            p = sent.prosody
            assert p is not None
            assert len(p.patches) == len(sent)
            assert p.duration_scalars.shape == (len(sent), 2)

    def test_cache_round_trip(self, featurized_corpus, tmp_path):
        sents = featurized_corpus.sentences
        path = tmp_path / "feat.bin"
        save_feature_cache(path, sents, meta={"content_hash": "h"})
        stripped = [type(s)(sentence_id=s.sentence_id, tokens=s.tokens, tree=s.tree,
                            gold_spans=s.gold_spans) for s in sents]
        meta = load_feature_cache(path, stripped)
        assert meta["content_hash"] == "h"
        for a, b in zip(sents, stripped):
            np.testing.assert_array_equal(a.prosody.pause_before, b.prosody.pause_before)
            np.testing.assert_array_equal(
                a.prosody.patches[0].frames, b.prosody.patches[0].frames
            )

    def test_cache_bit_stable(self, featurized_corpus, tmp_path):
        sents = featurized_corpus.sentences
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_feature_cache(p1, sents, meta={"content_hash": "h"})
        save_feature_cache(p2, sents, meta={"content_hash": "h"})
        assert p1.read_bytes() == p2.read_bytes()

    def test_content_hash_sensitive(self, tmp_path):
        f = tmp_path / "x"
        f.write_text("abc")
        h1 = content_hash([f], extra="p1")
        assert h1 == content_hash([f], extra="p1")
        assert h1 != content_hash([f], extra="p2")
        f.write_text("abd")
        assert h1 != content_hash([f], extra="p1")


@pytest.fixture(scope="module")
def cli_workspace(tmp_path_factory):
    """Synthetic corpus written as train/dev/test files plus a config."""
    root = tmp_path_factory.mktemp("cliws")
    data = overfit_corpus(n_sentences=24, seed=5)
    corpus_dir = root / "corpus"
    write_corpus(data, corpus_dir, splits={"train": 16, "dev": 4, "test": 4})
    write_tree_file(corpus_dir / "all.trees", [s.tree for s in data.sentences])

    cfg = {
        "data": {
            "train_trees": str(corpus_dir / "train.trees"),
            "dev_trees": str(corpus_dir / "dev.trees"),
            "test_trees": str(corpus_dir / "test.trees"),
            "alignments": str(corpus_dir / "alignments.tsv"),
            "frame_tracks": str(corpus_dir / "tracks"),
        },
        "model": {
            "encoder": {
                "layers": 1, "heads": 2, "d_content": 16, "d_position": 8,
                "d_prosody": 8, "d_ff": 16, "dropout": 0.0, "max_len": 30,
            },
            "cnn": {"widths": [3], "filters_per_width": 4},
            "span_hidden": 16,
            "embedding": {"mode": "learned", "dim": 8, "min_count": 1},
        },
        "train": {
            "seeds": [1], "batch_size": 8, "learning_rate": 0.004,
            "warmup_steps": 8, "max_epochs": 2, "patience": 3,
        },
        "eval": {"n_resamples": 500},
        "output_dir": str(root / "run1"),
    }
    cfg_path = root / "exp.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))
    return {"root": root, "config": cfg_path, "corpus": corpus_dir, "raw": cfg}


def write_cfg(ws, updates, name):
    raw = yaml.safe_load(ws["config"].read_text())

    def deep_update(dst, src):
        for k, v in src.items():
            if isinstance(v, dict) and isinstance(dst.get(k), dict):
                deep_update(dst[k], v)
            else:
                dst[k] = v

    deep_update(raw, updates)
    path = ws["root"] / name
    path.write_text(yaml.safe_dump(raw))
    return path


class TestCliWorkflow:
    def test_features_cacheable_and_bit_stable(self, cli_workspace):
        ws = cli_workspace
        rc = cli.main(["features", "--config", str(ws["config"])])
        assert rc == 0
        cache = ws["root"] / "run1" / "features.bin"
        first = cache.read_bytes()
        assert cli.main(["features", "--config", str(ws["config"])]) == 0
        assert cache.read_bytes() == first

    def test_train_writes_run_artifacts(self, cli_workspace):
        ws = cli_workspace
        rc = cli.main(["train", "--config", str(ws["config"])])
        assert rc == 0
        run = ws["root"] / "run1"
        assert (run / "config.yaml").read_text() == ws["config"].read_text()
        assert (run / "seed1" / "metrics.log").exists()
        assert (run / "seed1" / "best.ckpt").exists()
        assert (run / "summary.tsv").exists()
        assert (run / "median.tsv").exists()
        assert (run / "test_predictions.trees").exists()

    def test_train_reruns_identical_logs(self, cli_workspace):
        ws = cli_workspace
        run1_log = (ws["root"] / "run1" / "seed1" / "metrics.log").read_bytes()
        cfg2 = write_cfg(ws, {"output_dir": str(ws["root"] / "run2")}, "exp2.yaml")
        assert cli.main(["train", "--config", str(cfg2)]) == 0
        run2_log = (ws["root"] / "run2" / "seed1" / "metrics.log").read_bytes()
        assert run1_log == run2_log

    def test_parse_preserves_order_and_matches_files(self, cli_workspace):
        ws = cli_workspace
        ckpt = ws["root"] / "run1" / "seed1" / "best.ckpt"
        out = ws["root"] / "pred.trees"
        rc = cli.main([
            "parse", "--config", str(ws["config"]),
            "--checkpoint", str(ckpt),
            "--input", str(ws["corpus"] / "all.trees"),
            "--output", str(out),
        ])
        assert rc == 0
        preds = read_tree_file(out)
        golds = read_tree_file(ws["corpus"] / "all.trees")
        assert len(preds) == len(golds)
        for p, g in zip(preds, golds):
            assert [l.word for l in p.leaves()] == [l.word for l in g.leaves()]

    def test_parse_subset_matches_alignments_by_words(self, cli_workspace):
        # parsing a split file (not the whole corpus) must still find each
        # sentence's alignment block and prosodic features
        ws = cli_workspace
        ckpt = ws["root"] / "run1" / "seed1" / "best.ckpt"
        out = ws["root"] / "pred_test_split.trees"
        rc = cli.main([
            "parse", "--config", str(ws["config"]),
            "--checkpoint", str(ckpt),
            "--input", str(ws["corpus"] / "test.trees"),
            "--output", str(out),
        ])
        assert rc == 0
        preds = read_tree_file(out)
        golds = read_tree_file(ws["corpus"] / "test.trees")
        assert len(preds) == len(golds) == 4

    def test_parse_prosody_checkpoint_without_tracks_is_data_error(self, cli_workspace):
        ws = cli_workspace
        ckpt = ws["root"] / "run1" / "seed1" / "best.ckpt"
        cfg = write_cfg(
            ws,
            {
                "data": {"alignments": "", "frame_tracks": "", "features_cache": ""},
                "output_dir": str(ws["root"] / "run_noproso"),
            },
            "exp_noproso.yaml",
        )
        rc = cli.main([
            "parse", "--config", str(cfg),
            "--checkpoint", str(ckpt),
            "--input", str(ws["corpus"] / "all.trees"),
        ])
        assert rc == cli.EXIT_DATA

    def test_parse_text_only_checkpoint_needs_no_prosody(self, cli_workspace, capsys):
        ws = cli_workspace
        cfg = write_cfg(
            ws,
            {
                "data": {"alignments": "", "frame_tracks": ""},
                "model": {"encoder": {"d_prosody": 0}},
                "output_dir": str(ws["root"] / "run_text"),
            },
            "exp_text.yaml",
        )
        assert cli.main(["train", "--config", str(cfg)]) == 0
        ckpt = ws["root"] / "run_text" / "seed1" / "best.ckpt"
        rc = cli.main([
            "parse", "--config", str(cfg),
            "--checkpoint", str(ckpt),
            "--input", str(ws["corpus"] / "all.trees"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.count("(") > 20  # trees printed to stdout

    def test_evaluate_and_significance_and_report(self, cli_workspace, capsys):
        ws = cli_workspace
        gold = ws["corpus"] / "all.trees"
        pred = ws["root"] / "pred.trees"
        rc = cli.main([
            "evaluate", "--config", str(ws["config"]),
            "--gold", str(gold), "--pred", str(pred),
            "--output", str(ws["root"] / "report"),
        ])
        assert rc == 0
        assert (ws["root"] / "report.tsv").exists()
        assert (ws["root"] / "report.txt").exists()
        capsys.readouterr()

        rc = cli.main([
            "significance", "--config", str(ws["config"]),
            "--gold", str(gold), "--pred-a", str(gold), "--pred-b", str(pred),
            "--resamples", "300",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "p=" in out

        rc = cli.main([
            "report", "--config", str(ws["config"]),
            "--runs", str(ws["root"] / "run1"), str(ws["root"] / "missing_run"),
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "run1" in out and "—" in out

    def test_config_error_exit_code(self, cli_workspace, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("output_dir: x\nmodel: {encoder: {d_content: 15}}\n")
        assert cli.main(["train", "--config", str(bad)]) == cli.EXIT_CONFIG

    def test_numeric_error_exit_code(self, cli_workspace, monkeypatch):
        from prosoparse.errors import NumericError

        def boom(cfg, args):
            raise NumericError("synthetic failure")

        monkeypatch.setattr(cli, "cmd_evaluate", boom)
        ws = cli_workspace
        rc = cli.main(["evaluate", "--config", str(ws["config"]),
                       "--gold", "x", "--pred", "y"])
        assert rc == cli.EXIT_NUMERIC

    def test_console_script_help(self):
        import subprocess

        out = subprocess.run(
            ["prosoparse", "--help"], capture_output=True, text=True
        )
        assert out.returncode == 0
        for sub in ("features", "train", "parse", "evaluate", "significance", "report"):
            assert sub in out.stdout

    def test_load_corpus_contract(self, cli_workspace):
        from prosoparse.corpus import load_corpus
        from prosoparse.errors import DataError
        from prosoparse.prosody import read_alignment_file

        ws = cli_workspace
        alignments = read_alignment_file(ws["corpus"] / "alignments.tsv")
        sentences = load_corpus(ws["corpus"] / "all.trees", alignments)
        assert [s.sentence_id for s in sentences] == list(alignments.keys())
        with pytest.raises(DataError):
            load_corpus(ws["corpus"] / "train.trees", alignments)  # 16 vs 24

    def test_missing_path_exit_code(self, cli_workspace):
        ws = cli_workspace
        cfg = write_cfg(
            ws,
            {"data": {"train_trees": str(ws["root"] / "nope.trees")}},
            "exp_missing.yaml",
        )
        assert cli.main(["train", "--config", str(cfg)]) == cli.EXIT_CONFIG
