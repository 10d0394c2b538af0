"""Accuracy estimation: synthetic surrogate, external processes, calibration.

The search only ever sees the estimator contract: config in, accuracy in
[0, 1] out.  The surrogate is a deterministic closed form with diminishing
returns per stage, standing in for proxy-task finetuning so searches can be
verified at desk scale.  External evaluators are child processes speaking
line-delimited JSON on stdin/stdout (protocol 1).
"""

from __future__ import annotations

import hashlib
import json
import math
import queue
import shlex
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .costs import network_macs
from .model import ArchConfig, NetworkTemplate, ValidationError

PROTOCOL_VERSION = 1


class EvaluatorError(Exception):
    """Base class for estimator failures."""


class EvaluatorTimeout(EvaluatorError):
    pass


class MalformedResponse(EvaluatorError):
    pass


class NonZeroExit(EvaluatorError):
    pass


class AccuracyOutOfRange(EvaluatorError):
    pass


class RemoteEvaluationError(EvaluatorError):
    """The evaluator process reported an error for a request."""


@dataclass(frozen=True)
class EvaluationResult:
    accuracy: float
    meta: dict = field(default_factory=dict)
    duration: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise AccuracyOutOfRange(f"accuracy {self.accuracy} outside [0, 1]")


@dataclass(frozen=True)
class SurrogateParams:
    """Coefficients of the synthetic accuracy model.

    Each stage contributes stage_weights[i] * (1 - exp(-macs_i / stage_scales[i]));
    resolution contributes resolution_weight * (1 - exp(-r / resolution_scale)).
    A noise amplitude > 0 adds a perturbation keyed by (seed, config), never
    by call order, so concurrent evaluation cannot change results.
    """

    stage_weights: tuple[float, ...]
    stage_scales: tuple[float, ...]
    resolution_weight: float
    resolution_scale: float
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if len(self.stage_weights) != len(self.stage_scales):
            raise ValidationError("stage_weights and stage_scales must have equal length")
        if not self.stage_weights:
            raise ValidationError("surrogate needs at least one stage")
        if any(w <= 0 for w in self.stage_weights):
            raise ValidationError("stage_weights must be positive")
        if sum(self.stage_weights) > 1.0 + 1e-12:
            raise ValidationError("stage_weights must sum to at most 1")
        if any(b <= 0 for b in self.stage_scales):
            raise ValidationError("stage_scales must be positive")
        if self.resolution_weight <= 0 or self.resolution_scale <= 0:
            raise ValidationError("resolution weight and scale must be positive")
        if self.noise < 0:
            raise ValidationError("noise amplitude must be non-negative")

    @classmethod
    def from_template(cls, template: NetworkTemplate, noise: float = 0.0, seed: int = 0) -> SurrogateParams:
        """Defaults that saturate around a few times the base per-stage MACs."""
        from .model import base_config

        breakdown = network_macs(template, base_config(template))
        n = template.num_stages
        return cls(
            stage_weights=tuple(0.7 / n for _ in range(n)),
            stage_scales=tuple(float(3 * m) for m in breakdown.per_stage_macs),
            resolution_weight=0.25,
            resolution_scale=float(2 * template.base_resolution),
            noise=noise,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return {
            "stage_weights": list(self.stage_weights),
            "stage_scales": list(self.stage_scales),
            "resolution_weight": self.resolution_weight,
            "resolution_scale": self.resolution_scale,
            "noise": self.noise,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> SurrogateParams:
        known = {
            "stage_weights",
            "stage_scales",
            "resolution_weight",
            "resolution_scale",
            "noise",
            "seed",
        }
        unknown = set(obj) - known
        if unknown:
            raise ValidationError(f"unknown surrogate field(s): {', '.join(sorted(unknown))}")
        try:
            return cls(
                stage_weights=tuple(float(x) for x in obj["stage_weights"]),
                stage_scales=tuple(float(x) for x in obj["stage_scales"]),
                resolution_weight=float(obj["resolution_weight"]),
                resolution_scale=float(obj["resolution_scale"]),
                noise=float(obj.get("noise", 0.0)),
                seed=int(obj.get("seed", 0)),
            )
        except KeyError as exc:
            raise ValidationError(f"surrogate params missing field {exc.args[0]!r}") from exc


@dataclass(frozen=True)
class SurrogateRef:
    params: SurrogateParams | None = None  # None: derive from the template

    kind = "surrogate"


@dataclass(frozen=True)
class ExternalRef:
    command: str
    timeout: float = 30.0

    kind = "external"

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValidationError("external evaluator timeout must be positive")


EvaluatorRef = SurrogateRef | ExternalRef


def config_noise(seed: int, config: ArchConfig) -> float:
    """Deterministic perturbation in [-1, 1) keyed by seed and config."""
    key = "{}|{}|{}|{}".format(
        seed,
        config.resolution,
        ",".join(map(str, config.widths)),
        ",".join(map(str, config.depths)),
    )
    digest = hashlib.sha256(key.encode("ascii")).digest()
    u = int.from_bytes(digest[:8], "big") / 2**64
    return 2.0 * u - 1.0


def surrogate_accuracy(
    template: NetworkTemplate, config: ArchConfig, params: SurrogateParams
) -> EvaluationResult:
    start = time.perf_counter()
    breakdown = network_macs(template, config)
    if len(params.stage_weights) != template.num_stages:
        raise ValidationError("surrogate params sized for a different template")
    score = 0.0
    for weight, scale, macs in zip(params.stage_weights, params.stage_scales, breakdown.per_stage_macs):
        score += weight * (1.0 - math.exp(-macs / scale))
    score += params.resolution_weight * (1.0 - math.exp(-config.resolution / params.resolution_scale))
    if params.noise > 0:
        score += params.noise * config_noise(params.seed, config)
    accuracy = min(1.0, max(0.0, score))
    return EvaluationResult(
        accuracy=accuracy,
        meta={"evaluator": "surrogate"},
        duration=time.perf_counter() - start,
    )


def config_request(request_id: int, config: ArchConfig, budget_macs: int) -> dict:
    return {
        "id": request_id,
        "protocol": PROTOCOL_VERSION,
        "resolution": config.resolution,
        "stages": [{"width": w, "depth": d} for w, d in zip(config.widths, config.depths)],
        "budget": {"macs": budget_macs},
    }


class ExternalEvaluator:
    """Client for one evaluator child process; one request in flight at a time.

    Responses are matched by id, so a process that answers out of order still
    works.  The client never blocks past its timeout and always reaps the
    child on close.
    """

    def __init__(self, command: str, timeout: float = 30.0):
        self.command = command
        self.timeout = timeout
        self._next_id = 0
        self._pending: dict[int, dict] = {}
        self._lines: queue.Queue[str | None] = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise NonZeroExit(f"cannot launch evaluator {command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        assert self._proc.stdout is not None
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF sentinel

    def evaluate(self, config: ArchConfig, budget_macs: int) -> EvaluationResult:
        start = time.perf_counter()
        request_id = self._next_id
        self._next_id += 1
        request = config_request(request_id, config, budget_macs)
        if self._proc.poll() is not None:
            raise NonZeroExit(f"evaluator exited with code {self._proc.returncode}")
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise NonZeroExit(f"evaluator pipe closed: {exc}") from exc

        deadline = start + self.timeout
        while request_id not in self._pending:
            remaining = deadline - time.perf_counter()
            if remaining <= 0:
                self._kill()
                raise EvaluatorTimeout(f"no response for request {request_id} within {self.timeout}s")
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                self._kill()
                raise EvaluatorTimeout(
                    f"no response for request {request_id} within {self.timeout}s"
                ) from None
            if line is None:
                code = self._proc.wait()
                raise NonZeroExit(f"evaluator exited (code {code}) before responding")
            self._store_line(line)

        response = self._pending.pop(request_id)
        if "error" in response:
            raise RemoteEvaluationError(f"evaluator error: {response['error']}")
        accuracy = response.get("accuracy")
        if not isinstance(accuracy, (int, float)) or isinstance(accuracy, bool):
            raise MalformedResponse(f"response for id {request_id} has no numeric accuracy")
        if not 0.0 <= accuracy <= 1.0:
            raise AccuracyOutOfRange(f"accuracy {accuracy} outside [0, 1]")
        meta = response.get("meta", {})
        if not isinstance(meta, dict):
            raise MalformedResponse("response meta must be an object")
        return EvaluationResult(
            accuracy=float(accuracy), meta=meta, duration=time.perf_counter() - start
        )

    def _store_line(self, line: str) -> None:
        line = line.strip()
        if not line:
            return
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"evaluator wrote invalid JSON: {line[:200]!r}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), int):
            raise MalformedResponse(f"evaluator response lacks an integer id: {line[:200]!r}")
        self._pending[obj["id"]] = obj

    def _kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                if self._proc.stdin is not None:
                    self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.terminate()
                try:
                    self._proc.wait(timeout=2.0)
                except subprocess.TimeoutExpired:
                    self._kill()
        self._reader.join(timeout=2.0)

    def __enter__(self) -> ExternalEvaluator:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def evaluate_external(
    ref: ExternalRef, template: NetworkTemplate, config: ArchConfig
) -> EvaluationResult:
    """One-shot convenience wrapper: spawn, evaluate once, tear down."""
    budget = network_macs(template, config).total_macs
    with ExternalEvaluator(ref.command, ref.timeout) as client:
        return client.evaluate(config, budget)


class EvaluatorPool:
    """Evaluates candidate lists, preserving candidate order in the results.

    The surrogate is a pure function and runs inline.  External evaluation
    spawns one child process per worker; each worker thread owns exactly one
    client for its lifetime.
    """

    def __init__(
        self,
        ref: EvaluatorRef,
        template: NetworkTemplate,
        workers: int = 1,
    ):
        self.template = template
        self.workers = max(1, workers)
        self._surrogate: SurrogateParams | None = None
        self._clients: list[ExternalEvaluator] = []
        if isinstance(ref, SurrogateRef):
            self._surrogate = ref.params or SurrogateParams.from_template(template)
        else:
            self._clients = [
                ExternalEvaluator(ref.command, ref.timeout) for _ in range(self.workers)
            ]

    @property
    def surrogate_params(self) -> SurrogateParams | None:
        return self._surrogate

    def evaluate_all(self, jobs: list[tuple[ArchConfig, int]]) -> list[EvaluationResult]:
        if self._surrogate is not None:
            return [surrogate_accuracy(self.template, c, self._surrogate) for c, _ in jobs]
        if len(self._clients) == 1 or len(jobs) <= 1:
            return [self._clients[0].evaluate(c, m) for c, m in jobs]

        results: list[EvaluationResult | None] = [None] * len(jobs)
        errors: list[BaseException] = []
        idle: queue.Queue[ExternalEvaluator] = queue.Queue()
        for client in self._clients:
            idle.put(client)
        work: queue.Queue[tuple[int, ArchConfig, int]] = queue.Queue()
        for index, (config, macs) in enumerate(jobs):
            work.put((index, config, macs))

        def run() -> None:
            client = idle.get()
            try:
                while True:
                    item = work.get_nowait()
                    index, config, macs = item
                    try:
                        results[index] = client.evaluate(config, macs)
                    except BaseException as exc:  # propagated after join
                        errors.append(exc)
                        return
            except queue.Empty:
                return
            finally:
                idle.put(client)

        threads = [threading.Thread(target=run) for _ in self._clients]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        assert all(r is not None for r in results)
        return results  # type: ignore[return-value]

    def close(self) -> None:
        for client in self._clients:
            client.close()

    def __enter__(self) -> EvaluatorPool:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


# --- Spearman rank correlation ---------------------------------------------


def average_ranks(values: list[float]) -> list[float]:
    """Ranks 1..n with tied values sharing the mean of their rank range."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman_rho(x: list[float], y: list[float]) -> float | None:
    """Rank correlation with average-rank ties; None when ranks have no variance."""
    if len(x) != len(y):
        raise ValidationError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValidationError("need at least two points")
    rx = average_ranks(list(x))
    ry = average_ranks(list(y))
    n = len(rx)
    mean = (n + 1) / 2
    dx = [r - mean for r in rx]
    dy = [r - mean for r in ry]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0 or var_y == 0:
        return None
    cov = sum(a * b for a, b in zip(dx, dy))
    return cov / math.sqrt(var_x * var_y)


def calibrate(
    template: NetworkTemplate,
    reference: list[tuple[ArchConfig, float]],
    ref_evaluator: EvaluatorRef,
    workers: int = 1,
) -> float | None:
    """Spearman rho between reference accuracies and the evaluator's scores."""
    if len(reference) < 2:
        raise ValidationError("calibration needs at least two reference points")
    jobs = [(config, network_macs(template, config).total_macs) for config, _ in reference]
    with EvaluatorPool(ref_evaluator, template, workers) as pool:
        results = pool.evaluate_all(jobs)
    return spearman_rho([acc for _, acc in reference], [r.accuracy for r in results])


def load_surrogate_params(path: str | Path) -> SurrogateParams:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValidationError(f"cannot read surrogate params {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"surrogate params {path} is not valid JSON (line {exc.lineno}): {exc.msg}"
        ) from exc
    return SurrogateParams.from_dict(obj)


def save_surrogate_params(params: SurrogateParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2) + "\n", encoding="utf-8")
