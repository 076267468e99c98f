"""Issuing spheres from kernel code, with a recovery policy and tallies."""

from __future__ import annotations

from typing import Optional

from redthreads.runtime import Runtime, RuntimeConfig, Status
from redthreads.sphere import Strength

__all__ = ["SphereDriver", "RECOVERY_POLICIES"]

RECOVERY_POLICIES = ("ignore", "reexecute")


class SphereDriver:
    """Calls ``runtime.execute_sphere`` and applies the recovery policy.

    ``recovery="ignore"`` keeps going with replica 0's values after a
    detected or uncorrectable error and counts it as unhandled.
    ``"reexecute"`` is discard-on-detect: the sphere is run again, up to
    ``max_retries`` times, and only an error on the last attempt is left
    unhandled.
    """

    def __init__(self, runtime: Runtime, recovery: str = "ignore", max_retries: int = 3):
        if recovery not in RECOVERY_POLICIES:
            raise ValueError(f"recovery must be one of {RECOVERY_POLICIES}, not {recovery!r}")
        self.runtime = runtime
        self.recovery = recovery
        self.max_retries = max_retries
        self._exec = runtime.execute_sphere
        self.reset()

    @classmethod
    def standalone(cls, strength="off", **kw) -> "SphereDriver":
        """A driver over a private static runtime, for one-off kernel calls."""
        s = Strength.parse(strength)
        rt = Runtime(RuntimeConfig(max_strength=s, dynamic=False))
        return cls(rt, **kw)

    def reset(self):
        self.detections = 0
        self.corrections = 0
        self.uncorrectable = 0
        self.unhandled = 0
        self.retries = 0
        self.detected_seqs = []
        self.corrected_seqs = []
        # True while a failed sphere is being run again; fault injectors use
        # it to tell re-executions from new spheres
        self.retrying = False

    def __call__(self, spec, unit, inputs):
        """Run one sphere and return the outputs the caller continues with."""
        res = self._exec(spec, unit, inputs)
        if res.status is Status.SERIAL_DONE or res.status is Status.VERIFIED:
            return res.outputs
        return self._slow(res, spec, unit, inputs)

    def _slow(self, res, spec, unit, inputs):
        attempt = 0
        while True:
            st = res.status
            if st is Status.CORRECTED:
                self.corrections += 1
                self.corrected_seqs.append(res.seq)
                return res.outputs
            if st is Status.DETECTED_ERROR or st is Status.UNCORRECTABLE_ERROR:
                self.detected_seqs.append(res.seq)
                if st is Status.DETECTED_ERROR:
                    self.detections += 1
                else:
                    self.uncorrectable += 1
                if self.recovery == "reexecute" and attempt < self.max_retries:
                    attempt += 1
                    self.retries += 1
                    self.retrying = True
                    try:
                        res = self._exec(spec, unit, inputs)
                    finally:
                        self.retrying = False
                    continue
                self.unhandled += 1
                return res.outputs
            return res.outputs

    def close(self) -> Optional[list]:
        return self.runtime.finalize()
