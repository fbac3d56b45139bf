"""The scorer contract and its non-neural implementations.

A scorer assigns a log-likelihood to a candidate output string given an
input string.  ``score`` must be a pure function of its two arguments:
equal calls return equal values.  The trainable implementation lives in
``seqlab.teacher``; this module has the deterministic table scorer used as
a test oracle and the newline-delimited-JSON wire protocol for scorers
running out of process.
"""

from __future__ import annotations

import json
import socket
import threading
from typing import Protocol, Sequence, runtime_checkable

from .errors import ProtocolError, TransportError


@runtime_checkable
class Scorer(Protocol):
    def score(self, input_str: str, candidate: str) -> float: ...

    def score_batch(self, input_str: str, candidates: Sequence[str]) -> list[float]: ...


class TableScorer:
    """Exact lookup table over (input, candidate) pairs; misses return
    ``default_score`` so lookups never fail."""

    def __init__(self, entries=None, default_score: float = -100.0):
        self.entries: dict[tuple[str, str], float] = dict(entries or {})
        self.default_score = float(default_score)

    def score(self, input_str: str, candidate: str) -> float:
        return self.entries.get((input_str, candidate), self.default_score)

    def score_batch(self, input_str: str, candidates: Sequence[str]) -> list[float]:
        return [self.score(input_str, c) for c in candidates]

    def set(self, input_str: str, candidate: str, score: float) -> None:
        self.entries[(input_str, candidate)] = float(score)


# ---------------------------------------------------------------------------
# Wire protocol: one JSON document per line, UTF-8.
#   request:  {"id": <int>, "input": <str>, "candidates": [<str>, ...]}
#   response: {"id": <int>, "scores": [<float>, ...]}  (natural log)
# Responses come back in request order.
# ---------------------------------------------------------------------------


class ExternalScorer:
    """Client side of the wire protocol; satisfies the scorer contract."""

    def __init__(self, reader, writer, owns=()):
        self._reader = reader
        self._writer = writer
        self._owns = tuple(owns)
        self._next_id = 0

    @classmethod
    def connect(cls, host: str, port: int, timeout: float | None = 10.0) -> "ExternalScorer":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        reader = sock.makefile("rb")
        writer = sock.makefile("wb")
        return cls(reader, writer, owns=(reader, writer, sock))

    def score_batch(self, input_str: str, candidates: Sequence[str]) -> list[float]:
        self._next_id += 1
        req_id = self._next_id
        request = {"id": req_id, "input": input_str, "candidates": list(candidates)}
        try:
            self._writer.write(json.dumps(request, ensure_ascii=False).encode("utf-8"))
            self._writer.write(b"\n")
            self._writer.flush()
            line = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise TransportError(f"scorer session I/O failed: {exc}") from exc
        if not line:
            raise TransportError("scorer peer closed the connection")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not valid JSON: {exc}") from exc
        if not isinstance(response, dict) or response.get("id") != req_id:
            raise ProtocolError(f"response id mismatch (want {req_id})")
        scores = response.get("scores")
        if not isinstance(scores, list) or len(scores) != len(candidates):
            got = len(scores) if isinstance(scores, list) else type(scores).__name__
            raise ProtocolError(
                f"expected {len(candidates)} scores, got {got}"
            )
        try:
            return [float(s) for s in scores]
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"non-numeric score in response: {exc}") from exc

    def score(self, input_str: str, candidate: str) -> float:
        return self.score_batch(input_str, [candidate])[0]

    def close(self) -> None:
        for obj in self._owns:
            try:
                obj.close()
            except OSError:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve_connection(scorer: Scorer, reader, writer) -> None:
    """Answer requests from ``reader`` with ``scorer`` until EOF.

    Requests are answered in the order received; a malformed request ends
    the session.
    """
    for line in reader:
        if not line.strip():
            continue
        request = json.loads(line)
        scores = scorer.score_batch(request["input"], request["candidates"])
        response = {"id": request["id"], "scores": [float(s) for s in scores]}
        writer.write(json.dumps(response, ensure_ascii=False).encode("utf-8"))
        writer.write(b"\n")
        writer.flush()


def loopback_scorer(scorer: Scorer) -> ExternalScorer:
    """Serve ``scorer`` over an in-process socket pair; useful as the
    reference peer for protocol tests and as a template for real servers."""
    client_sock, server_sock = socket.socketpair()

    def run():
        with server_sock, server_sock.makefile("rb") as r, server_sock.makefile("wb") as w:
            try:
                serve_connection(scorer, r, w)
            except (OSError, ValueError, KeyError, json.JSONDecodeError):
                pass

    threading.Thread(target=run, daemon=True).start()
    reader = client_sock.makefile("rb")
    writer = client_sock.makefile("wb")
    return ExternalScorer(reader, writer, owns=(reader, writer, client_sock))


def serve_tcp(scorer: Scorer, host: str = "127.0.0.1", port: int = 0):
    """Listen on a TCP port and serve one connection at a time in a daemon
    thread.  Returns (bound_port, stop_callable)."""
    listener = socket.create_server((host, port))
    stopped = threading.Event()

    def run():
        while not stopped.is_set():
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            with conn, conn.makefile("rb") as r, conn.makefile("wb") as w:
                try:
                    serve_connection(scorer, r, w)
                except (OSError, ValueError, KeyError, json.JSONDecodeError):
                    continue

    threading.Thread(target=run, daemon=True).start()

    def stop():
        stopped.set()
        listener.close()

    return listener.getsockname()[1], stop
