"""Training-stage tag shared across modules.

PMG: privileged reference-filtering stage (full simulator state observable,
command noise, loose termination, no physics randomization).
GMT: deployable tracking stage (proprioception only, observation noise,
domain randomization, pushes, desired-contact reward).
"""

from enum import Enum


class Stage(str, Enum):
    PMG = "pmg"
    GMT = "gmt"

    @classmethod
    def parse(cls, value: "str | Stage") -> "Stage":
        if isinstance(value, Stage):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown stage {value!r} (expected 'pmg' or 'gmt')") from None
