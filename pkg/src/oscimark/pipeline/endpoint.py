"""Treatment endpoint: fractional improvement of the negative-symptom factor score."""
from __future__ import annotations

import math

from ..errors import DegenerateBaselineError, ParameterError

#: lowest attainable negative-symptom factor score (7 items scored 1..7)
SCALE_FLOOR = 7.0
RESPONDER_THRESHOLD = 0.20


def endpoint_pct(t0: float, t1: float) -> float:
    """Fractional improvement ``(t0 - t1) / (t0 - 7)``.

    Negative values mean the score worsened.

    >>> endpoint_pct(31, 25)
    0.25
    """
    t0, t1 = float(t0), float(t1)
    if not (math.isfinite(t0) and math.isfinite(t1)):
        raise ParameterError("scores must be finite")
    if t0 <= SCALE_FLOOR:
        raise DegenerateBaselineError(f"baseline {t0:g} is at or below the scale floor of 7")
    if t1 < SCALE_FLOOR:
        raise ParameterError(f"follow-up score {t1:g} is below the scale floor of 7")
    return (t0 - t1) / (t0 - SCALE_FLOOR)


def classify_responder(pct: float) -> bool:
    """Responder when the improvement strictly exceeds 20%."""
    if not math.isfinite(pct):
        raise ParameterError("improvement must be finite")
    return pct > RESPONDER_THRESHOLD
