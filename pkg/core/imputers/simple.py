"""
Non-adjusting replacements and the ceiling post-processing step.
"""
from typing import Optional

import numpy as np

from core.errors import ContractError
from core.imputers.base import imputer, prepare, require_limits
from core.models.outcome import ImputationOutcome


@imputer("dl_unif")
def dl_unif(x, dl, rng: Optional[np.random.Generator] = None) -> ImputationOutcome:
    """Draw each zero cell from Uniform(0.1·DL, DL); other cells untouched."""
    data = prepare(x, dl)
    if not data.has_zeros:
        return ImputationOutcome(imputed=data.x)
    require_limits(data)
    if rng is None:
        raise ContractError("dl_unif needs an rng")
    limits = data.dl[data.mask]
    out = data.x.copy()
    out[data.mask] = rng.uniform(0.1 * limits, limits)
    return ImputationOutcome(imputed=out)


@imputer("add1")
def add1(x, dl=None, rng: Optional[np.random.Generator] = None) -> ImputationOutcome:
    """Set every zero to 1."""
    data = prepare(x, None)
    out = np.where(data.mask, 1.0, data.x)
    return ImputationOutcome(imputed=out)


def apply_ceiling(outcome: ImputationOutcome) -> ImputationOutcome:
    """Round every cell up to the next integer; negative-row flags are kept."""
    if outcome.is_failed:
        raise ContractError("cannot apply the ceiling to a failed outcome")
    return outcome.with_(imputed=np.ceil(outcome.imputed), variant="ceil")
