"""Model files and run manifests."""
import datetime as _dt
import json
import os
import platform

import numpy as np

from .baselines import DtiModel
from .kernels import AcquisitionScheme, TensorKernel, TensorParams
from .model import MixtureModel
from .simulate import FORMAT_VERSION, check_version

__all__ = ["model_to_dict", "model_from_dict", "save_model", "load_model",
           "write_manifest", "manifest_path", "write_json", "library_version"]


def library_version():
    from . import __version__
    return __version__


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=False)
        fh.write("\n")


def model_to_dict(model, method, extra=None):
    d = {"version": FORMAT_VERSION, "method": method}
    if isinstance(model, DtiModel):
        d["components"] = [{"v": model.principal_direction.tolist(),
                            "w": 1.0}]
        d.update(model.to_dict())
    else:
        d["components"] = model.to_dict()
    if extra:
        d.update(extra)
    return d


def model_from_dict(d, scheme=None):
    """Rebuild a fitted model; mixture models are bound to ``scheme``."""
    check_version(d, "model")
    try:
        if "tensor" in d:
            return DtiModel.from_dict(d)
        comps = d["components"]
        weights = [float(c["w"]) for c in comps]
        params = [TensorParams.from_dict(c) for c in comps]
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"malformed model: {err}") from err
    if scheme is None:
        scheme = AcquisitionScheme(np.eye(3), 1000.0)
    return MixtureModel(weights, params, TensorKernel(scheme))


def save_model(model, method, path, extra=None):
    write_json(model_to_dict(model, method, extra), path)


def load_model(path, scheme=None):
    with open(path) as fh:
        return model_from_dict(json.load(fh), scheme)


def manifest_path(output):
    return os.fspath(output) + ".manifest.json"


def write_manifest(output, command, config, seed=None, outputs=None,
                   extra=None, started=None):
    """Write ``<output>.manifest.json`` describing how ``output`` was made.

    Timestamps live only here, so the outputs themselves stay byte-stable.
    """
    now = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    d = {"version": FORMAT_VERSION, "command": command, "config": config,
         "seed": seed, "library_version": library_version(),
         "python": platform.python_version(), "numpy": np.__version__,
         "started": started or now, "finished": now,
         "outputs": [os.fspath(p) for p in (outputs or [output])]}
    if extra:
        d.update(extra)
    write_json(d, manifest_path(output))
    return d
