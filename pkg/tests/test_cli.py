import json

import pytest
from click.testing import CliRunner

from dedupacq.cli import main
from dedupacq.corpus import block_bytes, gen_image, gen_prefix_collision_pair
from dedupacq.manifest import read_manifest


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_acquire_and_reconstruct_offline(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=1, blocks=12, tail=7)
    repo = tmp_path / "repo"
    mf = tmp_path / "a.dam.json"
    r = run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", mf,
            "--report-json", tmp_path / "r.json", "--meta", "serial=SN1")
    assert r.exit_code == 0, r.stderr
    assert "13 total, 13 uploaded" in r.stdout
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["unique_artifacts_uploaded"] == 13
    assert read_manifest(mf).device_meta["serial"] == "SN1"
    r = run(runner, "reconstruct", mf, tmp_path / "out.img", "--offline", repo)
    assert r.exit_code == 0 and r.stdout.startswith("verified")
    assert (tmp_path / "out.img").read_bytes() == img.read_bytes()


def test_reconstruct_by_id(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=2, blocks=3)
    repo = tmp_path / "repo"
    run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", tmp_path / "m.json")
    r = run(runner, "reconstruct", "M00000001", tmp_path / "out", "--offline", repo)
    assert r.exit_code == 0


def test_missing_artifacts_exit_3(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=3, blocks=4)
    repo = tmp_path / "repo"
    mf = tmp_path / "a.dam.json"
    run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", mf)
    victim = read_manifest(mf).entries[2].digest
    path = repo / "store" / "objects" / "sha256" / victim.hex[:2] / victim.hex[2:4] / victim.hex
    path.unlink()
    r = run(runner, "reconstruct", mf, tmp_path / "out", "--offline", repo)
    assert r.exit_code == 3
    assert str(victim) in r.stderr.splitlines()
    assert not (tmp_path / "out").exists()


def test_risk_mismatch_exit_2(tmp_path, runner):
    bs, prefix = 8192, 1024
    a, b = gen_prefix_collision_pair(prefix, bs)
    (tmp_path / "one.img").write_bytes(a)
    (tmp_path / "two.img").write_bytes(block_bytes(0, "z", 0, bs) + b)
    repo = tmp_path / "repo"
    opts = ["--block-size", bs, "--risk", prefix, "--offline", repo, "--case", "c1"]
    r = run(runner, "acquire", tmp_path / "one.img", *opts, "--manifest-out", tmp_path / "1.json")
    assert "RISK MODE" in r.stdout
    run(runner, "acquire", tmp_path / "two.img", *opts, "--manifest-out", tmp_path / "2.json")
    r = run(runner, "reconstruct", tmp_path / "2.json", tmp_path / "out", "--offline", repo)
    assert r.exit_code == 2
    assert "MISMATCH" in r.stdout and "entry 1 [8192, 16384)" in r.stdout


def test_target_exists_exit_4(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=4, blocks=1)
    repo = tmp_path / "repo"
    run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", tmp_path / "m.json")
    (tmp_path / "out").write_bytes(b"x")
    r = run(runner, "reconstruct", tmp_path / "m.json", tmp_path / "out", "--offline", repo)
    assert r.exit_code == 4 and "refusing to overwrite" in r.stderr


def test_no_backend_is_usage_error(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=5, blocks=1)
    r = run(runner, "acquire", img, "--case", "c1")
    assert r.exit_code == 2 and "--server" in r.stderr


def test_unreachable_server_exit_5(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=5, blocks=1)
    r = run(runner, "acquire", img, "--case", "c1", "--server", "http://127.0.0.1:9",
            "--manifest-out", tmp_path / "m.json")
    assert r.exit_code == 5


def test_flag_and_report(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=6, blocks=5)
    repo = tmp_path / "repo"
    mf = tmp_path / "m.json"
    run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", mf)
    target = read_manifest(mf).entries[3].digest
    r = run(runner, "flag", target, "incriminating", "--note", "seen", "--offline", repo)
    assert r.exit_code == 0 and "incriminating" in r.stdout
    r = run(runner, "report", mf, "--offline", repo)
    assert r.stdout.splitlines()[1] == "INCRIMINATING: 1 artifact(s), 4096 bytes"
    assert f"offset        12288  length     4096  {target}" in r.stdout
    r = run(runner, "report", mf, "--offline", repo, "--json")
    data = json.loads(r.stdout)
    assert data["counts"] == {"unknown": 4, "benign": 0, "incriminating": 1}


def test_hashset_commands(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=7, blocks=2)
    repo = tmp_path / "repo"
    mf = tmp_path / "m.json"
    run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", mf)
    d = read_manifest(mf).entries[0].digest
    run(runner, "flag", d, "benign", "--offline", repo, "--hashset", "os")
    r = run(runner, "hashset", "pull", "os", "--offline", repo, "--local-index", tmp_path / "li",
            "--out", tmp_path / "os.txt")
    assert r.exit_code == 0
    assert (tmp_path / "os.txt").read_text() == f"dedupacq-hashset v1 sha256 benign os\n{d.hex}\n"
    r = run(runner, "hashset", "export", "os", "--local-index", tmp_path / "li")
    assert r.stdout == (tmp_path / "os.txt").read_text()
    (tmp_path / "bad.txt").write_text("dedupacq-hashset v1 sha256 benign x\nnothex\n")
    r = run(runner, "hashset", "import", tmp_path / "bad.txt", "--local-index", tmp_path / "li")
    assert r.exit_code == 1 and "line 2" in r.stderr


def test_stats(tmp_path, runner):
    img = tmp_path / "r.img"
    img.write_bytes(block_bytes(0, "s", 0, 4096) * 4)
    repo = tmp_path / "repo"
    run(runner, "acquire", img, "--case", "c1", "--offline", repo, "--manifest-out", tmp_path / "m.json")
    s = json.loads(run(runner, "stats", "--offline", repo).stdout)
    assert (s["artifact_count"], s["stored_bytes"], s["logical_bytes"]) == (1, 4096, 16384)
    assert s["dedup_savings"] == 0.75


def test_config_file_defaults(tmp_path, runner):
    img = gen_image(tmp_path / "a.img", seed=8, blocks=2, block_size=512)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"acquire": {"block_size": 512, "offline": str(tmp_path / "repo")}}))
    r = run(runner, "--config", cfg, "acquire", img, "--case", "c1", "--manifest-out", tmp_path / "m.json")
    assert r.exit_code == 0, r.stderr
    assert read_manifest(tmp_path / "m.json").block_size == 512


def test_corpus_commands(tmp_path, runner):
    r = run(runner, "corpus", "pair", tmp_path / "p", "--blocks", 10, "--overlap", 0.3)
    assert "shared blocks: 3/10" in r.stdout
    run(runner, "corpus", "image", tmp_path / "i.img", "--blocks", 3, "--tail", 5)
    assert (tmp_path / "i.img").stat().st_size == 3 * 4096 + 5
