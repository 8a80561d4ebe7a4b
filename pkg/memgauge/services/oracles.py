#services/oracles.py

"""Model oracles for CSR probing.

Every oracle exposes ``predict(item_id, tokens, query_tokens=())`` and
returns a label string or a token tuple. Implementations:

* ``ModelOracle``: the in-process reference model (reentrant).
* ``SubprocessOracle``: an external program speaking the line protocol,
  one ``{"id", "tokens"}`` JSON request per line on its stdin and one
  ``{"id", "prediction"}`` JSON response per line on its stdout, matched by id.
* ``OraclePool``: a fixed set of oracle instances checked out per query.
* ``HttpOracle``: a remote ``POST /predict`` endpoint with retries.
* ``FunctionOracle``: any ``tokens -> prediction`` callable.
"""

import json
import logging
import queue
import shlex
import subprocess
import threading
import time
from typing import Callable, Dict, Optional, Sequence, Union

import requests
from pydantic import ValidationError

from memgauge.config import get_settings
from memgauge.errors import OracleFailure
from memgauge.models.oracle import OracleRequest, OracleResponse
from memgauge.services import refmodel

logger = logging.getLogger("memgauge")

Prediction = Union[str, tuple]


def same_prediction(a, b) -> bool:
    """Exact label or token-sequence equality."""
    if isinstance(a, (list, tuple)) or isinstance(b, (list, tuple)):
        if isinstance(a, str) or isinstance(b, str):
            return False
        return tuple(a) == tuple(b)
    return a == b


def _normalize(prediction) -> Prediction:
    return tuple(prediction) if isinstance(prediction, list) else prediction


class FunctionOracle:
    def __init__(self, function: Callable[[Sequence[str]], Prediction]):
        self.function = function

    def predict(self, item_id: str, tokens: Sequence[str], query_tokens: Sequence[str] = ()) -> Prediction:
        return _normalize(self.function(tuple(tokens)))


class ModelOracle:
    """In-process oracle backed by a trained reference model"""
    def __init__(self, model):
        self.model = model

    def predict(self, item_id: str, tokens: Sequence[str], query_tokens: Sequence[str] = ()) -> Prediction:
        return refmodel.predict(self.model, tokens, query_tokens).label


def as_oracle(oracle):
    if hasattr(oracle, "predict"):
        return oracle
    if callable(oracle):
        return FunctionOracle(oracle)
    raise TypeError(f"{type(oracle).__name__} is not an oracle")


class SubprocessOracle:
    """External model process speaking the JSON line protocol"""
    def __init__(self, command: Union[str, Sequence[str]], timeout: Optional[float] = None):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout = timeout if timeout is not None else get_settings().ORACLE_TIMEOUT
        self._responses: Dict[str, OracleResponse] = {}
        self._condition = threading.Condition()
        self._write_lock = threading.Lock()
        self._exited = False
        try:
            self.process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as e:
            raise OracleFailure("<startup>", f"cannot start {self.command[0]}: {e}") from e
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        logger.info(f"Started oracle process {self.command} (pid {self.process.pid})")

    def _read_loop(self):
        for line in self.process.stdout:
            if not line.strip():
                continue
            try:
                response = OracleResponse.model_validate_json(line)
            except ValidationError:
                logger.warning(f"Ignoring malformed oracle response: {line.strip()[:200]}")
                continue
            with self._condition:
                self._responses[response.id] = response
                self._condition.notify_all()
        with self._condition:
            self._exited = True
            self._condition.notify_all()

    def predict(self, item_id: str, tokens: Sequence[str], query_tokens: Sequence[str] = ()) -> Prediction:
        request = OracleRequest(id=item_id, tokens=tuple(tokens), query_tokens=tuple(query_tokens))
        payload = request.model_dump(exclude_defaults=True)
        with self._write_lock:
            try:
                self.process.stdin.write(json.dumps(payload) + "\n")
                self.process.stdin.flush()
            except (OSError, ValueError) as e:
                raise OracleFailure(item_id, f"oracle process unavailable: {e}") from e

        with self._condition:
            self._condition.wait_for(lambda: item_id in self._responses or self._exited, self.timeout)
            if item_id not in self._responses:
                reason = "oracle process exited" if self._exited else f"no response within {self.timeout:g} s"
                raise OracleFailure(item_id, reason)
            response = self._responses.pop(item_id)
        return _normalize(response.prediction)

    def close(self):
        if self.process.poll() is None:
            try:
                self.process.stdin.close()
                self.process.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.process.kill()
                self.process.wait()
        logger.info(f"Oracle process {self.process.pid} exited with {self.process.returncode}")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


class OraclePool:
    """Serializes queries per oracle instance across a fixed pool of workers"""
    def __init__(self, factory: Callable[[], object], size: Optional[int] = None):
        self.size = size or get_settings().ORACLE_POOL_SIZE
        self._members = [factory() for _ in range(self.size)]
        self._idle: "queue.Queue" = queue.Queue()
        for member in self._members:
            self._idle.put(member)

    def predict(self, item_id: str, tokens: Sequence[str], query_tokens: Sequence[str] = ()) -> Prediction:
        member = self._idle.get()
        try:
            return member.predict(item_id, tokens, query_tokens)
        finally:
            self._idle.put(member)

    def close(self):
        for member in self._members:
            if hasattr(member, "close"):
                member.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


class HttpOracle:
    """Client for a remote ``POST /predict`` oracle"""
    def __init__(
        self,
        server_url: str,
        timeout: Optional[float] = None,
        max_retries: Optional[int] = None,
        retry_delay: Optional[float] = None,
    ):
        settings = get_settings()
        self.server_url = server_url.rstrip("/")
        self.timeout = timeout if timeout is not None else settings.ORACLE_TIMEOUT
        self.max_retries = max_retries if max_retries is not None else settings.ORACLE_MAX_RETRIES
        self.retry_delay = retry_delay if retry_delay is not None else settings.ORACLE_RETRY_DELAY
        self.session = requests.Session()  # Use a session for connection pooling

    def predict(self, item_id: str, tokens: Sequence[str], query_tokens: Sequence[str] = ()) -> Prediction:
        request = OracleRequest(id=item_id, tokens=tuple(tokens), query_tokens=tuple(query_tokens))
        retry_count = 0
        while True:
            if retry_count > 0:
                delay = self.retry_delay * 2 ** (retry_count - 1)
                logger.warning(f"Oracle request for {item_id} failed, retrying in {delay:g} seconds...")
                time.sleep(delay)
            try:
                response = self.session.post(
                    f"{self.server_url}/predict",
                    json=request.model_dump(mode="json"),
                    timeout=self.timeout,
                )
            except requests.exceptions.RequestException as e:
                retry_count += 1
                if retry_count >= self.max_retries:
                    raise OracleFailure(item_id, f"failed to connect after {self.max_retries} attempts: {e}") from e
                continue

            if response.status_code == 200:
                try:
                    return _normalize(OracleResponse.model_validate(response.json()).prediction)
                except (ValueError, ValidationError) as e:
                    raise OracleFailure(item_id, f"malformed response: {e}") from e
            try:
                detail = response.json().get("detail", f"server returned error code: {response.status_code}")
            except ValueError:
                detail = f"server returned error code: {response.status_code}"
            if response.status_code >= 500:
                retry_count += 1
                if retry_count < self.max_retries:
                    continue
            raise OracleFailure(item_id, str(detail))

    def close(self):
        self.session.close()
