import sys
import textwrap

import pytest

from advise.bundles import read_bundle
from advise.errors import RunnerError, RunnerTimeout, ValidationError
from advise.imgio import save_image
from advise.ioutil import load_json
from advise.runner import RunnerHandle
from conftest import textured_image

# One mode-driven conforming/misbehaving runner; the mode rides on the
# command prefix the same way a real runner's global flags would.
_FAKE = textwrap.dedent("""
    import json, pathlib, sys, time

    def main():
        mode, verb = sys.argv[1], sys.argv[2]
        args = dict(zip(sys.argv[3::2], sys.argv[4::2]))
        log = pathlib.Path(__file__).with_name("calls.log")
        with log.open("a") as fh:
            fh.write(" ".join(sys.argv[1:]) + chr(10))
        if mode == "sleep":
            time.sleep(10)
        if mode == "exit3":
            sys.stderr.write("boom: bad weights")
            return 3
        if verb == "export":
            out = pathlib.Path(args["--out"])
            out.mkdir(parents=True, exist_ok=True)
            (out / "marker.txt").write_text(args["--image"])
            return 0
        req = json.load(open(args["--manifest"]))
        topk = req.get("topk", 5)
        results = []
        for i, entry in enumerate(req["images"]):
            res = {
                "id": entry["id"],
                "topk_indices": list(range(topk)),
                "topk_scores": [0.5 / (j + 1) for j in range(topk)],
                "score_for_class": {str(c): 0.25
                                    for c in entry.get("classes", [])},
            }
            if i == 0:
                if mode == "unknown-id":
                    res["id"] = "who"
                elif mode == "inline-error":
                    res = {"id": entry["id"], "error": "oom"}
                elif mode == "short-topk":
                    res["topk_indices"] = res["topk_indices"][:-1]
                elif mode == "bad-score":
                    res["topk_scores"][0] = 1.5
                elif mode == "bad-class-score":
                    res["score_for_class"] = {"3": -0.1}
                elif mode == "drop":
                    continue
            results.append(res)
        doc = {"results": results}
        if mode == "no-results":
            doc = {"answers": results}
        json.dump(doc, open(args["--out"], "w"))
        return 0

    sys.exit(main())
""")


@pytest.fixture
def fake_runner(tmp_path):
    script = tmp_path / "fake_runner.py"
    script.write_text(_FAKE)

    def handle(mode="ok", **kw):
        return RunnerHandle([sys.executable, str(script), mode], **kw)

    handle.calls = lambda: (tmp_path / "calls.log").read_text().splitlines()
    return handle


def entries(tmp_path, n, classes=None):
    out = []
    for i in range(n):
        path = tmp_path / f"img{i}.png"
        if not path.exists():
            save_image(textured_image(i, (8, 8)), path)
        out.append((f"id{i}", str(path), classes))
    return out


class TestFromSpec:
    def test_string_is_shell_split(self):
        h = RunnerHandle.from_spec("python3 -m some_runner --flag 'a b'")
        assert h.command == ["python3", "-m", "some_runner", "--flag",
                             "a b"]

    def test_list_passthrough(self):
        h = RunnerHandle.from_spec(["x", "y"], timeout=5.0)
        assert h.command == ["x", "y"]
        assert h.timeout == 5.0

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            RunnerHandle.from_spec("")


class TestExport:
    def test_argv_composition(self, fake_runner, tmp_path):
        h = fake_runner()
        out = h.export("img.png", "m1", "conv5", "top1", tmp_path / "b")
        assert out == tmp_path / "b"
        assert (tmp_path / "b" / "marker.txt").read_text() == "img.png"
        assert fake_runner.calls() == [
            "ok export --image img.png --model m1 --layer conv5 "
            "--class top1 --out %s" % (tmp_path / "b")]

    def test_class_spec_stringified(self, fake_runner, tmp_path):
        fake_runner().export("i.png", "m", "l", 7, tmp_path / "b")
        assert "--class 7" in fake_runner.calls()[0]


class TestInfer:
    def test_roundtrip(self, fake_runner, tmp_path):
        res = fake_runner().infer(entries(tmp_path, 2, classes=[3]),
                                  workdir=tmp_path)
        assert set(res) == {"id0", "id1"}
        r = res["id0"]
        assert r["topk_indices"] == [0, 1, 2, 3, 4]
        assert r["topk_scores"][0] == 0.5
        assert r["score_for_class"] == {"3": 0.25}

    def test_request_manifest_schema(self, fake_runner, tmp_path):
        fake_runner().infer(
            [("a", "x.png", [1, 2]), ("b", "y.png", None)],
            workdir=tmp_path, topk=3)
        req = load_json(tmp_path / "requests.json")
        assert req["topk"] == 3
        assert req["images"][0] == {"id": "a", "path": "x.png",
                                    "classes": [1, 2]}
        assert req["images"][1] == {"id": "b", "path": "y.png"}

    def test_batching_respects_capacity(self, fake_runner, tmp_path):
        h = fake_runner(batch_capacity=2)
        res = h.infer(entries(tmp_path, 5), workdir=tmp_path)
        assert len(res) == 5
        infer_calls = [c for c in fake_runner.calls() if " infer " in c]
        assert len(infer_calls) == 3

    def test_topk_honored(self, fake_runner, tmp_path):
        res = fake_runner().infer(entries(tmp_path, 1), workdir=tmp_path,
                                  topk=2)
        assert len(res["id0"]["topk_indices"]) == 2


class TestFailureModes:
    def test_timeout(self, fake_runner, tmp_path):
        h = fake_runner("sleep", timeout=0.4)
        with pytest.raises(RunnerTimeout, match="exceeded"):
            h.infer(entries(tmp_path, 1), workdir=tmp_path)

    def test_nonzero_exit_carries_stderr(self, fake_runner, tmp_path):
        with pytest.raises(RunnerError,
                           match=r"(?s)exited 3.*boom: bad weights"):
            fake_runner("exit3").infer(entries(tmp_path, 1),
                                       workdir=tmp_path)

    def test_unlaunchable_command(self, tmp_path):
        h = RunnerHandle(["/nonexistent/runner-binary"])
        with pytest.raises(RunnerError, match="cannot launch"):
            h.infer(entries(tmp_path, 1), workdir=tmp_path)

    @pytest.mark.parametrize("mode,msg", [
        ("no-results", "lacks 'results'"),
        ("unknown-id", "unknown image id"),
        ("inline-error", "failed on 'id0': oom"),
        ("short-topk", "top-k indices"),
        ("bad-score", r"outside \[0, 1\]"),
        ("drop", "missing ids"),
    ])
    def test_malformed_responses(self, fake_runner, tmp_path, mode, msg):
        with pytest.raises(RunnerError, match=msg):
            fake_runner(mode).infer(entries(tmp_path, 2),
                                    workdir=tmp_path)

    def test_bad_class_score(self, fake_runner, tmp_path):
        with pytest.raises(RunnerError, match="score_for_class"):
            fake_runner("bad-class-score").infer(
                entries(tmp_path, 1, classes=[3]), workdir=tmp_path)


class TestStubIntegration:
    """The packaged stub runner speaks the handle protocol end to end."""

    @pytest.fixture
    def stub(self):
        return RunnerHandle([sys.executable, "-m", "advise.stub_runner"])

    def test_export_then_read(self, stub, tmp_path):
        path = save_image(textured_image(2, (16, 16)), tmp_path / "i.png")
        b = read_bundle(stub.export(path, "stub-4x4x6", "units", "top1",
                                    tmp_path / "bundle"))
        assert b.units == 6
        assert b.manifest.image == str(path)

    def test_infer_roundtrip(self, stub, tmp_path):
        res = stub.infer(entries(tmp_path, 2, classes=[0, 3]),
                         workdir=tmp_path)
        for rid in ("id0", "id1"):
            r = res[rid]
            assert len(r["topk_indices"]) == 5
            assert all(0.0 <= v <= 1.0 for v in r["topk_scores"])
            assert set(r["score_for_class"]) == {"0", "3"}
