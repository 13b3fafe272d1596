"""Mixture models and the penalty transform shared by all fitters."""
from dataclasses import dataclass

import numpy as np

__all__ = ["MixtureModel", "RegularizationSpec", "TransformedProblem",
           "transform", "prune"]

PENALTY_KINDS = ("none", "l1_squared", "volume_anchor")


@dataclass(frozen=True)
class RegularizationSpec:
    """Penalty appended to the least-squares objective.

    ``l1_squared`` adds ``lam * ||w||_1**2``; ``volume_anchor`` adds
    ``lam * (c - ||w||_1)**2``. Both are realized by one augmentation row.
    """

    kind: str = "none"
    lam: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.kind not in PENALTY_KINDS:
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if not self.c >= 0:
            raise ValueError("c must be nonnegative")

    @property
    def augment(self):
        """Entry appended to every kernel vector, or None."""
        if self.kind == "none":
            return None
        return float(np.sqrt(self.lam))

    @property
    def target_entry(self):
        if self.kind == "volume_anchor":
            return float(np.sqrt(self.lam) * self.c)
        return 0.0

    def penalty(self, weights):
        total = float(np.sum(weights))
        if self.kind == "l1_squared":
            return self.lam * total ** 2
        if self.kind == "volume_anchor":
            return self.lam * (self.c - total) ** 2
        return 0.0

    def to_dict(self):
        return {"kind": self.kind, "lambda": self.lam, "c": self.c}


class MixtureModel:
    """Nonnegative weights paired with kernel parameters.

    Parameters
    ----------
    weights : sequence of float
    params : sequence
        Kernel parameters, one per weight.
    family : kernel family
        Evaluator bound to the measurement points the model was fit on.
    """

    def __init__(self, weights, params, family):
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if len(weights) != len(params):
            raise ValueError("weights and params differ in length")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite and nonnegative")
        self.weights = weights
        self.params = list(params)
        self.family = family

    @property
    def n_components(self):
        return len(self.weights)

    def __len__(self):
        return self.n_components

    def __repr__(self):
        return (f"MixtureModel(K={self.n_components}, "
                f"family={getattr(self.family, 'name', '?')})")

    def design(self, family=None):
        family = self.family if family is None else family
        return family.design(self.params)

    def predict(self, family=None):
        """Predicted signal on the family's points (default: the fit points)."""
        family = self.family if family is None else family
        if self.n_components == 0:
            return np.zeros(family.n_points)
        return family.design(self.params) @ self.weights

    def spikes(self):
        """fODF as ``(directions, masses)`` for tensor-family models."""
        if self.n_components == 0:
            return np.zeros((0, 3)), np.zeros(0)
        dirs = np.array([p.direction for p in self.params])
        return dirs, self.weights.copy()

    def to_dict(self):
        return [dict(p.to_dict(), w=float(w))
                for w, p in zip(self.weights, self.params)]


def prune(model, weight_floor=0.0):
    """Drop components whose weight is not above ``weight_floor``."""
    if weight_floor < 0:
        raise ValueError("weight_floor must be nonnegative")
    keep = model.weights > weight_floor
    return MixtureModel(model.weights[keep],
                        [p for p, k in zip(model.params, keep) if k],
                        model.family)


@dataclass
class TransformedProblem:
    """Target and kernel lift of a penalized problem as plain least squares.

    With an augmentation row, ``y~ = (y; sqrt(lam) c)`` and
    ``f~ = (f; sqrt(lam))`` (``c = 0`` for the squared-l1 penalty), so that
    ``||y~ - F~ w||^2 = ||y - F w||^2 + lam P(w)``.
    """

    target: np.ndarray
    family: object
    reg: RegularizationSpec
    data: np.ndarray

    @property
    def n(self):
        return len(self.target)

    @property
    def augment(self):
        return self.reg.augment

    def lift(self, params_list):
        F = self.family.design(params_list)
        if self.augment is None:
            return F
        return np.vstack([F, np.full((1, F.shape[1]), self.augment)])

    def lift_one(self, params):
        return self.lift([params])[:, 0]

    def objective(self, weights, params_list):
        r = self.target - self.lift(params_list) @ np.asarray(weights, float)
        return float(r @ r)


def transform(y, family, reg=None):
    """Fold the penalty into an augmented least-squares problem."""
    reg = RegularizationSpec() if reg is None else reg
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) != family.n_points:
        raise ValueError("signal length does not match the family's points")
    if not np.all(np.isfinite(y)):
        raise ValueError("signal must be finite")
    if reg.augment is None:
        target = y.copy()
    else:
        target = np.append(y, reg.target_entry)
    return TransformedProblem(target=target, family=family, reg=reg, data=y)
