"""Client side of the external-trainer protocol (JSON lines over stdio).

The harness launches one adapter process per trial as

    <command...> --protocol 1 --data <trainer manifest path>

and exchanges exactly one JSON object per line, strictly alternating
request/response:

    {"cmd": "init", "checkpoint": str, "lr": num, "batch_size": int, "seed": int}
        -> {"ok": true, "protocol": 1, "manifest": {...}}
    {"cmd": "train", "epochs": int}     -> {"ok": true, "metric": num, ...}
    {"cmd": "eval_test"}                -> {"ok": true, "report": {...}}
    {"cmd": "pause"}                    -> {"ok": true, "token": str}
    {"cmd": "resume", "token": str}     -> {"ok": true}
    {"cmd": "shutdown"}                 -> {"ok": true}, then the process exits

Any failure is {"ok": false, "error": str}; adapters answer unknown
checkpoints with error "checkpoint_unavailable" and malformed requests with
"bad_request". The data manifest names serialized model-input files per
split; see sweep.write_trainer_data.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from pathlib import Path

from . import metrics
from .learner import TrainConfig

PROTOCOL_VERSION = 1


class TrainerProcessError(RuntimeError):
    """External trainer failed, answered ok:false, or broke the protocol."""


class _Session:
    """Raw line-level session; does not interpret ok/error."""

    def __init__(self, command: str | list[str], data_manifest: str | Path,
                 timeout: float = 60.0):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        argv += ["--protocol", str(PROTOCOL_VERSION), "--data", str(data_manifest)]
        self.timeout = timeout
        self.proc = subprocess.Popen(argv, stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True, bufsize=1)
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TrainerProcessError(f"trainer process closed stdin: {exc}") from exc

    def read_response(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise TrainerProcessError(f"no response within {self.timeout}s") from None
        if line is None:
            raise TrainerProcessError("trainer process closed its stdout")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrainerProcessError(f"non-JSON response line: {line!r}") from exc
        if not isinstance(obj, dict) or "ok" not in obj:
            raise TrainerProcessError(f"response missing 'ok' field: {obj!r}")
        return obj

    def roundtrip(self, payload: dict) -> dict:
        self.send_line(json.dumps(payload))
        return self.read_response()

    def close(self, grace: float = 5.0) -> int | None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=grace)
            except subprocess.TimeoutExpired:
                self.proc.terminate()
                try:
                    self.proc.wait(timeout=grace)
                except subprocess.TimeoutExpired:
                    self.proc.kill()
                    self.proc.wait()
        return self.proc.returncode


class ExternalTrainer:
    """TrainerHandle implementation backed by one adapter process."""

    def __init__(self, command: str | list[str], data_manifest: str | Path,
                 checkpoint: str, timeout: float = 120.0):
        self.checkpoint = checkpoint
        self._session = _Session(command, data_manifest, timeout=timeout)
        self.manifest: dict | None = None

    def _request(self, payload: dict) -> dict:
        response = self._session.roundtrip(payload)
        if not response.get("ok"):
            raise TrainerProcessError(
                f"trainer rejected {payload.get('cmd')!r}: {response.get('error')}")
        return response

    def init(self, config: TrainConfig) -> None:
        response = self._request({"cmd": "init", "checkpoint": self.checkpoint,
                                  "lr": config.learning_rate,
                                  "batch_size": config.batch_size,
                                  "seed": config.seed})
        if response.get("protocol") != PROTOCOL_VERSION:
            raise TrainerProcessError(
                f"adapter speaks protocol {response.get('protocol')}, "
                f"expected {PROTOCOL_VERSION}")
        self.manifest = response.get("manifest")

    def train(self, epochs: int) -> float:
        return float(self._request({"cmd": "train", "epochs": int(epochs)})["metric"])

    def evaluate_test(self) -> metrics.EvalReport:
        return metrics.report_from_dict(self._request({"cmd": "eval_test"})["report"])

    def pause(self) -> str:
        return str(self._request({"cmd": "pause"})["token"])

    def resume(self, token: str) -> None:
        self._request({"cmd": "resume", "token": token})

    def shutdown(self) -> None:
        try:
            if self._session.proc.poll() is None:
                self._request({"cmd": "shutdown"})
        finally:
            self._session.close()

    def __enter__(self) -> "ExternalTrainer":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def run_protocol_checks(command: str | list[str], data_manifest: str | Path,
                        checkpoint: str, timeout: float = 60.0) -> list[str]:
    """Scripted fake-client conformance suite for an adapter.

    Returns a list of failure descriptions (empty means the adapter passed).
    Covers the full session lifecycle, error answers for malformed requests
    and unknown checkpoints, metric stability of zero-epoch training, resume
    round-trips, report consistency, and deterministic replay.
    """
    failures: list[str] = []

    def check(cond: bool, what: str):
        if not cond:
            failures.append(what)

    # unknown checkpoint is rejected with the canonical error string
    s = _Session(command, data_manifest, timeout=timeout)
    try:
        r = s.roundtrip({"cmd": "init", "checkpoint": "no/such-checkpoint",
                         "lr": 1e-4, "batch_size": 16, "seed": 1})
        check(r.get("ok") is False, "init with unknown checkpoint must answer ok:false")
        check(r.get("error") == "checkpoint_unavailable",
              f"unknown checkpoint error must be 'checkpoint_unavailable', "
              f"got {r.get('error')!r}")
        # malformed request line
        s.send_line("this is not json")
        r = s.read_response()
        check(r.get("ok") is False and r.get("error") == "bad_request",
              f"malformed line must answer ok:false/bad_request, got {r!r}")
        # unknown command
        r = s.roundtrip({"cmd": "transmogrify"})
        check(r.get("ok") is False, "unknown cmd must answer ok:false")
    finally:
        s.close()

    def lifecycle() -> tuple[list[float], dict]:
        s = _Session(command, data_manifest, timeout=timeout)
        seen: list[float] = []
        try:
            r = s.roundtrip({"cmd": "init", "checkpoint": checkpoint,
                             "lr": 1e-2, "batch_size": 16, "seed": 7})
            check(r.get("ok") is True, f"init must succeed, got {r!r}")
            check(r.get("protocol") == PROTOCOL_VERSION,
                  f"init response must carry protocol {PROTOCOL_VERSION}")
            manifest = r.get("manifest") or {}
            check(manifest.get("checkpoint") == checkpoint,
                  "manifest must echo the checkpoint id")
            check((manifest.get("size_mb") or 0) > 0, "manifest size must be > 0")

            r0 = s.roundtrip({"cmd": "train", "epochs": 0})
            check(r0.get("ok") is True, "train(0) must succeed")
            m0 = r0.get("metric")
            r0b = s.roundtrip({"cmd": "train", "epochs": 0})
            check(r0b.get("metric") == m0, "train(0) must not change the metric")

            r1 = s.roundtrip({"cmd": "train", "epochs": 1})
            check(r1.get("ok") is True, "train(1) must succeed")
            m1 = r1.get("metric")
            check(isinstance(m1, (int, float)) and 0.0 <= m1 <= 1.0,
                  f"metric must be in [0,1], got {m1!r}")
            seen.extend([m0, m1])

            rp = s.roundtrip({"cmd": "pause"})
            check(rp.get("ok") is True and rp.get("token"), "pause must return a token")
            rr = s.roundtrip({"cmd": "resume", "token": rp.get("token")})
            check(rr.get("ok") is True, "resume with a fresh token must succeed")
            r2 = s.roundtrip({"cmd": "train", "epochs": 1})
            check(r2.get("ok") is True, "train after resume must succeed")
            seen.append(r2.get("metric"))

            re_ = s.roundtrip({"cmd": "eval_test"})
            check(re_.get("ok") is True, "eval_test must succeed")
            report = re_.get("report") or {}
            per_class = report.get("per_class") or {}
            f1s = [c.get("f1") for c in per_class.values()]
            if f1s and report.get("macro_f1") is not None:
                check(abs(report["macro_f1"] - sum(f1s) / len(f1s)) < 1e-9,
                      "macro_f1 must equal the mean of the per-class f1 values")
            else:
                check(False, f"eval_test report incomplete: {report!r}")

            rs = s.roundtrip({"cmd": "shutdown"})
            check(rs.get("ok") is True, "shutdown must succeed")
            code = s.close()
            check(code == 0, f"adapter must exit 0 after shutdown, got {code}")
            return seen, report
        finally:
            s.close()

    first_metrics, first_report = lifecycle()
    second_metrics, second_report = lifecycle()
    check(first_metrics == second_metrics,
          f"replayed session must produce identical metrics, got "
          f"{first_metrics} vs {second_metrics}")
    check(first_report == second_report, "replayed eval_test report must be identical")
    return failures
