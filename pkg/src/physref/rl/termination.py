"""Early termination on gross tracking failure.

The reference-filtering stage runs loose (0.5 m) so the policy may deviate
while it fixes artifacts; the proprioceptive stage terminates earlier
(0.3 m). Simulator divergence always terminates.
"""

from __future__ import annotations

import numpy as np

from ..stage import Stage

TERMINATION_THRESHOLDS = {Stage.PMG: 0.5, Stage.GMT: 0.3}   # m


def check_termination(body_pos, ref_body_pos, stage, diverged=None,
                      thresholds=None):
    """True where mean tracked-body position error exceeds the stage
    threshold or the simulator diverged.

    body_pos / ref_body_pos: (..., B, 2) tracked-body positions;
    diverged: optional (...,) bool. Returns a bool array shaped (...,).
    """
    stage = Stage.parse(stage)
    thr = (thresholds or TERMINATION_THRESHOLDS)[stage]
    err = np.linalg.norm(np.asarray(body_pos) - np.asarray(ref_body_pos), axis=-1)
    out = err.mean(axis=-1) > thr
    if diverged is not None:
        out = out | np.asarray(diverged, dtype=bool)
    return out
