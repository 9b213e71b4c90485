"""Black-box objective abstraction and parallel batch evaluation."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass
from typing import Callable

from .core import ObjectiveDirection, SolutionValue


@dataclass(frozen=True)
class Objective:
    """A user-supplied score function plus the metadata the framework needs.

    ``evaluate`` must accept a solution value and return a finite real in
    problem units. It should be deterministic within a run; set ``stochastic``
    when it is not, which forfeits replay-exactness but nothing else.
    """

    evaluate: Callable[[SolutionValue], float]
    direction: ObjectiveDirection
    name: str = ""
    description: str = ""
    stochastic: bool = False


@dataclass(frozen=True)
class EvalPolicy:
    """How a batch is evaluated and what happens when one evaluation fails.

    ``on_error`` is either None (abort the batch, the default) or a finite
    score substituted for the failing candidate. The substitute must be worse
    than anything the objective can legitimately return; that is on the caller.
    ``timeout`` is a per-evaluation limit in seconds.
    """

    workers: int = 1
    on_error: float | None = None
    timeout: float | None = None

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.on_error is not None and not math.isfinite(self.on_error):
            raise ValueError("on_error score must be finite")


class EvaluationFailed(Exception):
    """One candidate's evaluation raised, timed out, or returned non-finite."""

    def __init__(self, index: int, message: str):
        super().__init__(f"candidate {index}: {message}")
        self.index = index
        self.message = message


def _score(objective: Objective, candidate: SolutionValue) -> float:
    value = float(objective.evaluate(candidate))
    if not math.isfinite(value):
        raise ValueError(f"objective returned non-finite score {value!r}")
    return value


def evaluate_batch(
    objective: Objective,
    candidates: list[SolutionValue],
    policy: EvalPolicy = EvalPolicy(),
) -> list[float]:
    """Score every candidate, in order, with up to ``policy.workers`` threads.

    The returned list is positionally aligned with ``candidates`` no matter in
    which order evaluations finish. With one worker this is a plain sequential
    loop, so single-worker results are bit-identical to unthreaded evaluation.
    """
    if not candidates:
        raise ValueError("candidates must be non-empty")

    if policy.workers == 1:
        out: list[float] = []
        for i, cand in enumerate(candidates):
            try:
                out.append(_score(objective, cand))
            except Exception as exc:
                if policy.on_error is None:
                    raise EvaluationFailed(i, str(exc)) from exc
                out.append(policy.on_error)
        return out

    results: list[float] = [0.0] * len(candidates)
    with ThreadPoolExecutor(max_workers=policy.workers) as pool:
        futures = [pool.submit(_score, objective, c) for c in candidates]
        for i, fut in enumerate(futures):
            try:
                results[i] = fut.result(timeout=policy.timeout)
            except FutureTimeout:
                if policy.on_error is None:
                    for f in futures:
                        f.cancel()
                    raise EvaluationFailed(i, "evaluation timed out") from None
                results[i] = policy.on_error
            except Exception as exc:
                if policy.on_error is None:
                    for f in futures:
                        f.cancel()
                    raise EvaluationFailed(i, str(exc)) from exc
                results[i] = policy.on_error
    return results
