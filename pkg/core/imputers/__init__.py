"""
Zero-replacement methods behind one interface.

Importing the package registers every method under its stable identifier;
``impute(method_id, x, dl, rng=..., **params)`` dispatches by identifier.
"""
from core.imputers.base import REGISTRY, get_imputer, impute, prepare
from core.imputers.augmentation import lr_da
from core.imputers.lowrank import lr_svd
from core.imputers.multiplicative import gbm_cmult, mult_km, mult_lognorm, mult_repl
from core.imputers.regression import lr_em, pls_em
from core.imputers.simple import add1, apply_ceiling, dl_unif

__all__ = [
    "REGISTRY",
    "get_imputer",
    "impute",
    "prepare",
    "mult_repl",
    "mult_lognorm",
    "mult_km",
    "gbm_cmult",
    "lr_em",
    "pls_em",
    "lr_da",
    "lr_svd",
    "dl_unif",
    "add1",
    "apply_ceiling",
]
