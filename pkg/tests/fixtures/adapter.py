"""Test adapter: logistic model over sparse vectors (or token counts) behind the JSON-lines protocol.

usage: adapter.py MODE [ARG]
  sparse WEIGHTS_JSON   sigmoid(w.x + b) over sparse vectors
  tokens                sigmoid(#"good" - #"bad") over token sequences
  garbage               replies to predict with a non-JSON line
  wrongcount            replies with one probability too few
  slow-once MARKER      first predict (across restarts) sleeps 5 s
  badexit               exits with status 3 on bye
"""

import json
import math
import os
import sys
import time

mode = sys.argv[1]
arg = sys.argv[2] if len(sys.argv) > 2 else None
weights = json.load(open(arg)) if mode == "sparse" else None


def prob(item):
    if mode == "tokens":
        z = item.count("good") - item.count("bad")
    elif weights is not None:
        z = weights["b"] + sum(weights["w"][i] * v for i, v in zip(item["idx"], item["val"]))
    else:
        z = sum(item["val"]) if isinstance(item, dict) else 0.0
    return 1.0 / (1.0 + math.exp(-z))


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


for line in sys.stdin:
    msg = json.loads(line)
    op = msg["op"]
    if op == "hello":
        send({"op": "hello", "representation": "token-sequence" if mode == "tokens" else "sparse-vector", "name": f"test-{mode}"})
    elif op == "predict":
        if mode == "garbage":
            sys.stdout.write("this is not json\n")
            sys.stdout.flush()
            continue
        if mode == "slow-once" and not os.path.exists(arg):
            open(arg, "w").close()
            time.sleep(5)
        probs = [prob(x) for x in msg["inputs"]]
        if mode == "wrongcount":
            probs = probs[:-1]
        send({"op": "predict", "probs": probs})
    elif op == "bye":
        sys.exit(3 if mode == "badexit" else 0)
