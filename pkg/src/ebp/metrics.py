"""Prediction error and earth mover's distance between discrete fODFs."""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .sphere import axis_angle

__all__ = ["rmse", "DiscreteFodf", "ground_distance", "emd", "evaluate",
           "predict_on"]


def rmse(prediction, observed):
    prediction = np.asarray(prediction, dtype=float).reshape(-1)
    observed = np.asarray(observed, dtype=float).reshape(-1)
    if len(prediction) != len(observed):
        raise ValueError("length mismatch")
    if len(prediction) == 0:
        raise ValueError("empty input")
    return float(np.sqrt(np.mean((prediction - observed) ** 2)))


@dataclass
class DiscreteFodf:
    """Weighted direction spikes. Zero-mass spikes are dropped."""

    directions: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.directions, dtype=float).reshape(-1, 3)
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if len(d) != len(m):
            raise ValueError("directions and masses differ in length")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise ValueError("masses must be finite and nonnegative")
        keep = m > 0
        self.directions = d[keep] / np.linalg.norm(d[keep], axis=1,
                                                   keepdims=True)
        self.masses = m[keep]

    @classmethod
    def from_model(cls, model):
        return cls(*model.spikes())

    @property
    def total(self):
        return float(self.masses.sum())

    def __len__(self):
        return len(self.masses)

    def normalized(self):
        if self.total <= 0:
            raise ValueError("fODF has zero total mass")
        return DiscreteFodf(self.directions, self.masses / self.total)


def ground_distance(a_dirs, b_dirs):
    """Axis angle ``arccos |<u, v>|`` between every pair, in radians."""
    return axis_angle(np.asarray(a_dirs)[:, None, :],
                      np.asarray(b_dirs)[None, :, :])


def emd(a, b):
    """Antipodally symmetric earth mover's distance.

    Both fODFs are scaled to unit mass, then the transportation problem is
    solved exactly by the dual simplex method.
    """
    a = a.normalized()
    b = b.normalized()
    C = ground_distance(a.directions, b.directions)
    na, nb = C.shape
    if na == 1 or nb == 1:
        # a single source or sink leaves exactly one feasible plan
        return float(np.sum(C * np.outer(a.masses, b.masses)))
    A_eq = np.zeros((na + nb, na * nb))
    for i in range(na):
        A_eq[i, i * nb:(i + 1) * nb] = 1.0
    for j in range(nb):
        A_eq[na + j, j::nb] = 1.0
    b_eq = np.concatenate([a.masses, b.masses])
    res = linprog(C.reshape(-1), A_eq=A_eq, b_eq=b_eq, bounds=(0, None),
                  method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transportation solve failed: {res.message}")
    plan = np.clip(res.x, 0.0, None)
    return float(C.reshape(-1) @ plan)


def predict_on(model, scheme):
    """Predict any fitted model on an acquisition scheme."""
    family = getattr(model, "family", None)
    if family is not None:
        return model.predict(family.rebind(scheme))
    return model.predict(scheme)


def evaluate(model, dataset):
    """Train/test RMSE and, when the truth is known, EMD to the true fODF.

    Returns
    -------
    dict with keys ``train_rmse``, ``test_rmse`` and optionally ``emd``.
    """
    scheme = dataset.scheme
    pred = predict_on(model, scheme)
    y = dataset.signal
    out = {"train_rmse": rmse(pred[dataset.train], y[dataset.train]),
           "test_rmse": rmse(pred[dataset.test], y[dataset.test])}
    if dataset.truth is not None:
        fitted = DiscreteFodf(*model.spikes())
        truth = DiscreteFodf(*dataset.truth.model.spikes())
        if fitted.total > 0 and truth.total > 0:
            out["emd"] = emd(fitted, truth)
        else:
            out["emd"] = float("nan")
    return out
