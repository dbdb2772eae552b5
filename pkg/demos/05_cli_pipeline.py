"""
The command-line pipeline end to end
====================================

synth -> stats -> train -> infer -> fuse -> evaluate, all through the same
entry point the ``anaphor-re`` console script uses. Outputs land in a temp dir.
"""

import json
import tempfile
from pathlib import Path

from anaphor_re.cli import run

out = Path(tempfile.mkdtemp(prefix="anaphor-re-"))
tr, dev = out / "train.json", out / "dev.json"

assert run(["synth", "--n-docs", "32", "--seed", "0", "--output", str(tr)]) == 0
assert run(["synth", "--n-docs", "8", "--seed", "1", "--output", str(dev)]) == 0
run(["stats", "--corpus", str(tr), "--parses", str(out / "train.parses.jsonl")])

# small model, large steps; flags override anything in --config
small = ["--epochs", "30", "--dropout", "0", "--lr-encoder", "1e-3", "--lr-classifier", "2e-3"]
assert run(["train", "--corpus", str(tr), "--parses", str(out / "train.parses.jsonl"), "--dev", str(dev),
            "--dev-parses", str(out / "dev.parses.jsonl"), "--out", str(out / "run"), *small]) == 0
print((out / "run" / "train_log.jsonl").read_text().splitlines()[-1])

ckpt = str(out / "run" / "checkpoint.bin")
run(["infer", "--checkpoint", ckpt, "--corpus", str(dev), "--parses", str(out / "dev.parses.jsonl"),
     "--out", str(out / "run")])
run(["fuse", "--checkpoint", ckpt, "--corpus", str(dev), "--parses", str(out / "dev.parses.jsonl"),
     "--mode", "ISF", "--tau", "0.0", "--output", str(out / "run" / "fused.jsonl")])
run(["evaluate", "--predictions", str(out / "run" / "predictions.jsonl"), "--gold", str(dev),
     "--out", str(out / "run")])
print(json.loads((out / "run" / "metrics.json").read_text()))

# a bad flag is a configuration error: exit code 1 plus a JSON trailer on stderr
print("exit code", run(["train", "--corpus", str(tr), "--epochs", "zero"]))
