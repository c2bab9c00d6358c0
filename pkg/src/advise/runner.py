"""Subprocess protocol for model runners.

A runner is any executable honoring two subcommands:

  <cmd> export --image I.png --model M --layer L --class top1|<int> --out DIR
  <cmd> infer --manifest requests.json --out responses.json

requests.json: {"images": [{"id": str, "path": str, "classes": [int]?}],
"topk": 5}.  responses.json: {"results": [{"id": str, "topk_indices":
[5 ints], "topk_scores": [5 floats], "score_for_class": {"<int>":
float}}]}.  The optional per-image "classes" list asks for softmax
scores of specific classes (needed when a class left the top-5); runners
ignore keys they do not know.
"""

import os
import shlex
import subprocess
from dataclasses import dataclass

from .errors import RunnerError, RunnerTimeout, ValidationError
from .ioutil import dump_json, load_json


@dataclass
class RunnerHandle:
    """How to invoke a runner: command template, cwd, batching, budget."""

    command: list  # argv prefix, e.g. ["python", "-m", "advise.stub_runner"]
    workdir: str | None = None
    batch_capacity: int = 64
    timeout: float = 600.0

    @classmethod
    def from_spec(cls, spec, **kw):
        """Build from a shell-style command string."""
        argv = shlex.split(spec) if isinstance(spec, str) else list(spec)
        if not argv:
            raise ValidationError("empty runner command")
        return cls(command=argv, **kw)

    def _run(self, args):
        argv = list(self.command) + list(args)
        try:
            proc = subprocess.run(
                argv, cwd=self.workdir, timeout=self.timeout,
                capture_output=True, text=True,
            )
        except subprocess.TimeoutExpired as exc:
            raise RunnerTimeout(
                "runner exceeded %.0fs: %s" % (self.timeout, " ".join(argv))
            ) from exc
        except OSError as exc:
            raise RunnerError("cannot launch runner %r: %s" % (argv[0], exc)) from exc
        if proc.returncode != 0:
            raise RunnerError(
                "runner exited %d: %s\n%s"
                % (proc.returncode, " ".join(argv), proc.stderr.strip())
            )
        return proc

    def export(self, image, model, layer, class_spec, out_dir):
        """Ask the runner to export a bundle; returns out_dir."""
        self._run([
            "export", "--image", str(image), "--model", str(model),
            "--layer", str(layer), "--class", str(class_spec),
            "--out", str(out_dir),
        ])
        return out_dir

    def infer(self, images, workdir, topk=5):
        """Batched inference over [(id, path, classes-or-None), ...].

        Returns {id: result dict} after schema validation.
        """
        results = {}
        for i0 in range(0, len(images), self.batch_capacity):
            chunk = images[i0:i0 + self.batch_capacity]
            manifest = {
                "images": [
                    dict(
                        {"id": str(iid), "path": str(path)},
                        **({"classes": [int(c) for c in classes]} if classes else {}),
                    )
                    for iid, path, classes in chunk
                ],
                "topk": int(topk),
            }
            req = os.path.join(workdir, "requests.json")
            resp = os.path.join(workdir, "responses.json")
            dump_json(manifest, req)
            self._run(["infer", "--manifest", req, "--out", resp])
            try:
                doc = load_json(resp)
            except (OSError, ValueError) as exc:
                raise RunnerError("unreadable runner response %s: %s" % (resp, exc))
            results.update(_validate_responses(doc, manifest, topk))
        return results


def _validate_responses(doc, manifest, topk):
    if not isinstance(doc, dict) or "results" not in doc:
        raise RunnerError("runner response lacks 'results'")
    wanted = {img["id"] for img in manifest["images"]}
    out = {}
    for res in doc["results"]:
        rid = res.get("id")
        if rid not in wanted:
            raise RunnerError("runner answered for unknown image id %r" % rid)
        if "error" in res:
            raise RunnerError("runner failed on %r: %s" % (rid, res["error"]))
        idx = res.get("topk_indices")
        sc = res.get("topk_scores")
        if not isinstance(idx, list) or len(idx) != topk:
            raise RunnerError(
                "runner returned %r top-k indices for %r, want exactly %d"
                % (None if idx is None else len(idx), rid, topk)
            )
        if not isinstance(sc, list) or len(sc) != topk:
            raise RunnerError("runner top-k scores malformed for %r" % rid)
        if any((not 0.0 <= float(v) <= 1.0) for v in sc):
            raise RunnerError("runner top-k scores outside [0, 1] for %r" % rid)
        sfc = res.get("score_for_class", {})
        for key, val in sfc.items():
            if not 0.0 <= float(val) <= 1.0:
                raise RunnerError(
                    "runner score_for_class[%s] outside [0, 1] for %r" % (key, rid)
                )
        out[rid] = {
            "topk_indices": [int(i) for i in idx],
            "topk_scores": [float(v) for v in sc],
            "score_for_class": {str(k): float(v) for k, v in sfc.items()},
        }
    missing = wanted - set(out)
    if missing:
        raise RunnerError("runner response missing ids: %s" % sorted(missing))
    return out
