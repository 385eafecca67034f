"""Black-box models served by a subprocess speaking line-delimited JSON.

Protocol, one JSON object per line on the child's stdin/stdout::

    -> {"op": "hello"}
    <- {"op": "hello", "representation": "sparse-vector" | "token-sequence", "name": ...}
    -> {"op": "predict", "inputs": [...]}
    <- {"op": "predict", "probs": [...]}
    -> {"op": "bye"}          (child exits with status 0)

Sparse vectors travel as ``{"dim": V, "idx": [...], "val": [...]}`` and token
sequences as arrays of strings.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading

import numpy as np
import scipy.sparse as sp

from ..text import SparseVector
from ._base import PROB_CLIP, SPARSE_VECTOR, TOKEN_SEQUENCE, RepresentationError, logit

logger = logging.getLogger(__name__)


class AdapterProtocolError(RuntimeError):
    pass


class AdapterTimeout(AdapterProtocolError):
    pass


def encode_inputs(X, representation: str) -> list:
    if representation == SPARSE_VECTOR:
        if isinstance(X, SparseVector):
            return [X.to_json()]
        if isinstance(X, (list, tuple)) and X and isinstance(X[0], SparseVector):
            return [v.to_json() for v in X]
        if isinstance(X, (list, tuple)) and X and not isinstance(X[0], (int, float)):
            if isinstance(X[0], (list, tuple)) and X[0] and isinstance(X[0][0], str):
                raise RepresentationError("adapter expects sparse vectors, got token sequences")
        M = sp.csr_matrix(X if sp.issparse(X) else np.atleast_2d(np.asarray(X, dtype=np.float64)))
        return [SparseVector.from_row(M[i]).to_json() for i in range(M.shape[0])]
    if representation == TOKEN_SEQUENCE:
        out = []
        for doc in X:
            toks = getattr(doc, "tokens", doc)
            if isinstance(toks, str) or not all(isinstance(t, str) for t in toks):
                raise RepresentationError("adapter expects token sequences")
            out.append(list(toks))
        return out
    raise AdapterProtocolError(f"unknown representation {representation!r}")


class ExternalModel:
    """Handle to an adapter subprocess.

    Requests are serialized; a handle must not be shared between worker
    processes. A request that times out is retried once on a fresh
    subprocess before :class:`AdapterTimeout` is raised.
    """

    def __init__(self, command, timeout: float = 30.0, name: str | None = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout
        self.name = name
        self._proc = None
        self._lines: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self.representation = None
        self._start()

    def _start(self):
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc, self._lines), daemon=True).start()
        reply = self._request({"op": "hello"})
        rep = reply.get("representation")
        if rep not in (SPARSE_VECTOR, TOKEN_SEQUENCE):
            raise AdapterProtocolError(f"hello reply has invalid representation: {json.dumps(reply)}")
        self.representation = rep
        if self.name is None:
            self.name = str(reply.get("name", "external"))

    @staticmethod
    def _pump(proc, lines):
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    @property
    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _request(self, msg: dict) -> dict:
        if not self.alive:
            raise AdapterProtocolError("adapter process is not running")
        try:
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise AdapterProtocolError(f"adapter stdin closed: {exc}") from None
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise AdapterTimeout(f"no reply to {msg['op']!r} within {self.timeout}s") from None
        if line is None:
            raise AdapterProtocolError("adapter exited before replying")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise AdapterProtocolError(f"malformed reply line: {line.rstrip()!r}") from None
        if not isinstance(reply, dict) or reply.get("op") != msg["op"]:
            raise AdapterProtocolError(f"unexpected reply line: {line.rstrip()!r}")
        return reply

    def predict_positive(self, X) -> np.ndarray:
        inputs = encode_inputs(X, self.representation)
        msg = {"op": "predict", "inputs": inputs}
        with self._lock:
            try:
                reply = self._request(msg)
            except AdapterTimeout:
                logger.warning("adapter timed out; restarting and retrying once")
                self._kill()
                self._start()
                reply = self._request(msg)
        probs = reply.get("probs")
        if not isinstance(probs, list) or len(probs) != len(inputs):
            raise AdapterProtocolError(f"predict reply must carry {len(inputs)} probs: {json.dumps(reply)[:200]}")
        p = np.asarray(probs, dtype=np.float64)
        if not np.all((p >= 0) & (p <= 1)):
            raise AdapterProtocolError("adapter returned probabilities outside [0, 1]")
        return p

    def predict_proba(self, X):
        p = self.predict_positive(X)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        return logit(self.predict_positive(X), PROB_CLIP)

    def _kill(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def close(self) -> int | None:
        """Send ``bye`` and wait for exit; returns the exit status."""
        if not self.alive:
            return self._proc.returncode if self._proc else None
        try:
            self._proc.stdin.write(json.dumps({"op": "bye"}) + "\n")
            self._proc.stdin.flush()
            self._proc.stdin.close()
            return self._proc.wait(timeout=self.timeout)
        except (subprocess.TimeoutExpired, BrokenPipeError, OSError):
            self._kill()
            return self._proc.returncode

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self._kill()
        except Exception:
            pass


def check_adapter(command, timeout: float = 30.0, probe=None, probe_dim: int = 1) -> dict:
    """Handshake, send one probe prediction, shut down; report what happened.

    The default sparse probe is a unit vector of dimension ``probe_dim``;
    pass the vocabulary size for adapters that check it.
    """
    report: dict = {"command": command, "ok": False}
    model = ExternalModel(command, timeout=timeout)
    report["representation"] = model.representation
    report["name"] = model.name
    if probe is None:
        probe = [SparseVector(probe_dim, [0], [1.0])] if model.representation == SPARSE_VECTOR else [["probe"]]
    report["probe_probs"] = model.predict_positive(probe).tolist()
    status = model.close()
    report["exit_status"] = status
    if status != 0:
        raise AdapterProtocolError(f"adapter exited with status {status} after bye")
    report["ok"] = True
    return report
