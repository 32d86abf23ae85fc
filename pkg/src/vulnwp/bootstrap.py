"""Drive a freshly emitted environment to a configured state.

After the stack comes up, the admin page is polled every ten seconds
until it answers 200 (or a timeout expires), then the plan's setup steps
run inside the application container one by one, stopping at the first
failure. The clock and the HTTP prober are injected so the schedule can
be tested on simulated time.
"""

from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from datetime import datetime, timezone

from .errors import BootstrapTimeoutError, SetupStepFailedError
from .iac import EnvironmentPlan, SetupStep, render_step_argv

logger = logging.getLogger(__name__)

__all__ = [
    "Clock",
    "SystemClock",
    "SimulatedClock",
    "ReadinessClient",
    "HttpReadinessClient",
    "ReadinessProbe",
    "wait_ready",
    "CommandExecutor",
    "DockerExecutor",
    "StepResult",
    "SetupReport",
    "run_setup",
    "app_container_name",
]

DEFAULT_READINESS_PATH = "/wp-admin/index.php"
DEFAULT_INTERVAL = 10.0
DEFAULT_TIMEOUT = 300.0


class Clock(ABC):
    """Time source used by the poller; swap in a simulated one for tests."""

    @abstractmethod
    def monotonic(self) -> float: ...

    @abstractmethod
    def sleep(self, seconds: float) -> None: ...

    def now(self) -> datetime:
        return datetime.now(timezone.utc)


class SystemClock(Clock):
    def monotonic(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        time.sleep(seconds)


class SimulatedClock(Clock):
    """A clock that only moves when something sleeps."""

    def __init__(self, start: float = 0.0, now: datetime | None = None) -> None:
        self._time = start
        self._now = now or datetime(2021, 5, 1, tzinfo=timezone.utc)

    def monotonic(self) -> float:
        return self._time

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError("cannot sleep a negative duration")
        self._time += seconds

    def now(self) -> datetime:
        return self._now


class ReadinessClient(ABC):
    """Answers the HTTP status of a GET, or raises on transport trouble."""

    @abstractmethod
    def get_status(self, url: str) -> int: ...


class HttpReadinessClient(ReadinessClient):
    def __init__(self, timeout: float = 5.0, session=None) -> None:
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._timeout = timeout

    def get_status(self, url: str) -> int:
        return self._session.get(url, timeout=self._timeout, allow_redirects=False).status_code


@dataclass(frozen=True)
class ReadinessProbe:
    """What to poll and how patiently."""

    url: str
    interval: float = DEFAULT_INTERVAL
    timeout: float = DEFAULT_TIMEOUT
    success_status: int = 200

    def __post_init__(self) -> None:
        if self.interval <= 0:
            raise ValueError("probe interval must be positive")
        if self.timeout < self.interval:
            raise ValueError("probe timeout must be at least one interval")

    @classmethod
    def for_plan(cls, plan: EnvironmentPlan, path: str = DEFAULT_READINESS_PATH,
                 interval: float = DEFAULT_INTERVAL, timeout: float = DEFAULT_TIMEOUT) -> "ReadinessProbe":
        return cls(url=f"{plan.site.url}{path}", interval=interval, timeout=timeout)


def wait_ready(probe: ReadinessProbe, http: ReadinessClient, clock: Clock) -> float:
    """Poll until the probe URL answers its success status.

    The first request goes out immediately, then one per interval. A non
    matching status and a transport error both count as "not ready yet".
    Returns the elapsed seconds at first success; raises
    BootstrapTimeoutError at exactly the configured timeout, never
    sleeping past it.
    """
    start = clock.monotonic()
    while True:
        elapsed = clock.monotonic() - start
        try:
            status = http.get_status(probe.url)
        except Exception as exc:
            status = None
            logger.debug("probe %s errored after %.0fs: %s", probe.url, elapsed, exc)
        if status == probe.success_status:
            logger.info("environment ready after %.0fs", elapsed)
            return elapsed
        if elapsed + probe.interval > probe.timeout:
            remaining = probe.timeout - elapsed
            if remaining > 0:
                clock.sleep(remaining)
            raise BootstrapTimeoutError(
                f"{probe.url} not ready within {probe.timeout:.0f}s", elapsed=probe.timeout
            )
        clock.sleep(probe.interval)


class CommandExecutor(ABC):
    """Runs an argv inside a named container."""

    @abstractmethod
    def run(self, container: str, argv: list[str]) -> tuple[int, str]:
        """Return (exit status, captured output)."""


class DockerExecutor(CommandExecutor):
    """Executor that shells out to `docker exec` (container runtime required)."""

    def run(self, container: str, argv: list[str]) -> tuple[int, str]:
        import subprocess

        completed = subprocess.run(
            ["docker", "exec", container, *argv],
            capture_output=True,
            text=True,
        )
        return completed.returncode, completed.stdout + completed.stderr


@dataclass(frozen=True)
class StepResult:
    step: SetupStep
    ok: bool
    output: str


@dataclass(frozen=True)
class SetupReport:
    """Each attempted step with its status, in execution order."""

    results: tuple[StepResult, ...]

    @property
    def succeeded(self) -> bool:
        return all(r.ok for r in self.results)


def app_container_name(plan: EnvironmentPlan) -> str:
    return f"vulnwp-{plan.edb_id}-app"


def run_setup(plan: EnvironmentPlan, executor: CommandExecutor,
              container: str | None = None) -> SetupReport:
    """Run the plan's setup steps in order, stopping at the first failure.

    Returns the full report when every step exits zero. On a failure the
    partial report (failed step included) travels on the raised
    SetupStepFailedError.
    """
    container = container or app_container_name(plan)
    results: list[StepResult] = []
    for step in plan.setup_steps:
        argv = render_step_argv(step, plan)
        status, output = executor.run(container, argv)
        result = StepResult(step=step, ok=status == 0, output=output)
        results.append(result)
        if not result.ok:
            logger.warning("setup step %s failed with status %s", step.kind.value, status)
            raise SetupStepFailedError(
                f"step {step.kind.value} exited {status}",
                step=step,
                report=SetupReport(results=tuple(results)),
            )
    return SetupReport(results=tuple(results))
