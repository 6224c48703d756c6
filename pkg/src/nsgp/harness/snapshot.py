"""Save and load fitted models as JSON snapshots.

Floats are written with Python's shortest round-trip repr, so a
snapshot loads back to bit-identical parameters. A noise-free model
stores ``log_sigma_n`` as ``-Infinity`` (accepted by the stdlib JSON
parser). Training data is not part of a snapshot; a loaded model
carries ``train=None`` and must be given conditioning points to
predict.
"""

from __future__ import annotations

import json

import numpy as np

from ..errors import DataFormatError
from ..gp_core import BaseKernelSpec, GlobalHypers, KernelFamily
from ..latent_field import LatentField, LatentHypers
from ..nonstationary import FittedNGP, NgpKind
from .dataio import Standardizer

__all__ = ["save_snapshot", "load_snapshot"]

_FORMAT = "nsgp-snapshot-1"


def _base_kernel_doc(base: BaseKernelSpec) -> dict:
    return {
        "family": base.family.value,
        "log_length_scales": (
            None if base.log_length_scales is None else list(base.log_length_scales)
        ),
        "log_a": base.log_a,
        "log_b": base.log_b,
        "log_sigma": base.log_sigma,
    }


def save_snapshot(path, model: FittedNGP, standardizer: Standardizer = None) -> None:
    """Write a model (and optional standardization constants) to JSON."""
    doc = {
        "format": _FORMAT,
        "kind": model.kind.value,
        "globals": {
            "log_sigma_f": model.globals.log_sigma_f,
            "log_sigma_n": model.globals.log_sigma_n,
            "log_leis_latent_length": model.globals.log_leis_latent_length,
            "base_kernel": _base_kernel_doc(model.globals.base_kernel),
        },
        "latent_locations": model.latent_locations.tolist(),
        "latent": [
            {
                "hypers": field.hypers.param_vector().tolist(),
                "values": field.values.tolist(),
                "frozen_prefix": field.frozen_prefix,
            }
            for field in model.latent
        ],
        "standardizer": (
            None
            if standardizer is None
            else {"mean": standardizer.mean, "sd": standardizer.sd}
        ),
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _need(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise DataFormatError(f"snapshot is missing '{key}' in {where}")
    return doc[key]


def load_snapshot(path):
    """Read a snapshot back into ``(model, standardizer_or_None)``."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"snapshot is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT:
        raise DataFormatError(f"not a model snapshot (expected format {_FORMAT!r})")
    try:
        glob_doc = _need(doc, "globals", "top level")
        base_doc = _need(glob_doc, "base_kernel", "globals")
        base = BaseKernelSpec(
            KernelFamily(_need(base_doc, "family", "base_kernel")),
            log_length_scales=(
                None
                if base_doc.get("log_length_scales") is None
                else tuple(base_doc["log_length_scales"])
            ),
            log_a=base_doc.get("log_a"),
            log_b=base_doc.get("log_b"),
            log_sigma=base_doc.get("log_sigma"),
        )
        globals_ = GlobalHypers(
            float(_need(glob_doc, "log_sigma_f", "globals")),
            float(_need(glob_doc, "log_sigma_n", "globals")),
            base,
            glob_doc.get("log_leis_latent_length"),
        )
        locations = np.asarray(_need(doc, "latent_locations", "top level"), dtype=float)
        fields = tuple(
            LatentField(
                locations,
                np.asarray(_need(fd, "values", "latent entry"), dtype=float),
                LatentHypers.from_vector(_need(fd, "hypers", "latent entry")),
                frozen_prefix=int(fd.get("frozen_prefix", 0)),
            )
            for fd in _need(doc, "latent", "top level")
        )
        model = FittedNGP(NgpKind(_need(doc, "kind", "top level")), globals_, fields)
        std_doc = doc.get("standardizer")
        std = None
        if std_doc is not None:
            std = Standardizer(float(std_doc["mean"]), float(std_doc["sd"]))
        return model, std
    except DataFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"snapshot contents are invalid: {exc}") from exc
