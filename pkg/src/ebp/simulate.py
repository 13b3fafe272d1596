"""Crossing-fascicle DWI simulation with Rician noise."""
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .kernels import AcquisitionScheme, TensorKernel, TensorParams
from .model import MixtureModel
from .sphere import axis_angle, electrostatic_directions, random_unit_vectors

__all__ = [
    "SimulationConfig",
    "GroundTruth",
    "Dataset",
    "make_directions",
    "partition",
    "covering_radius",
    "rician",
    "generate",
    "dataset_to_dict",
    "dataset_from_dict",
    "save_dataset",
    "load_dataset",
]

FORMAT_VERSION = "1.0"


@dataclass
class SimulationConfig:
    n_directions: int = 150
    b_value: float = 1000.0
    n_fascicles: int = 3
    noise_sigma2: float = 0.005
    axial_range: tuple = (0.5, 2.0)
    radial: float = 0.0
    isotropic_weight: float = 0.0
    isotropic_diffusivity: float = 3.0
    seed: int = 0
    directions_seed: int = 0

    def __post_init__(self):
        if self.noise_sigma2 < 0:
            raise ValueError("noise_sigma2 must be nonnegative")
        if self.n_fascicles < 1:
            raise ValueError("n_fascicles must be >= 1")
        if self.n_directions < 2:
            raise ValueError("n_directions must be >= 2")
        if self.isotropic_weight < 0:
            raise ValueError("isotropic_weight must be nonnegative")
        self.axial_range = tuple(float(a) for a in self.axial_range)


@dataclass
class GroundTruth:
    model: MixtureModel
    clean: np.ndarray
    isotropic_weight: float = 0.0
    isotropic_diffusivity: float = 3.0

    def to_dict(self):
        d = {"components": self.model.to_dict(),
             "clean_signal": [float(x) for x in self.clean]}
        if self.isotropic_weight:
            d["isotropic"] = {"w": self.isotropic_weight,
                              "diffusivity": self.isotropic_diffusivity}
        return d


@dataclass
class Dataset:
    scheme: AcquisitionScheme
    signal: np.ndarray
    partition: tuple
    truth: GroundTruth = None
    config: dict = field(default=None)

    @property
    def train(self):
        return np.asarray(self.partition[0])

    @property
    def test(self):
        return np.asarray(self.partition[1])


def make_directions(n, seed=0):
    """Measurement directions from antipodal electrostatic repulsion."""
    points, _ = electrostatic_directions(n, seed)
    return points


def partition(directions):
    """Split directions into two interleaved halves covering the sphere.

    Greedy farthest-point assignment: partitions take turns, each picking
    the unassigned direction farthest (in axis angle) from the directions it
    already holds. An odd leftover goes to the first (training) partition.
    The result is deterministic.

    Returns
    -------
    train, test : sorted index arrays
    """
    d = np.asarray(directions, dtype=float)
    n = len(d)
    if n == 0:
        return np.array([], int), np.array([], int)
    angle = axis_angle(d[:, None, :], d[None, :, :])
    unassigned = np.ones(n, dtype=bool)
    parts = ([], [])
    nearest = [np.full(n, np.inf), np.full(n, np.inf)]
    turn = 0
    while unassigned.any():
        if n % 2 == 1 and unassigned.sum() == 1:
            turn = 0
        if parts[turn]:
            score = np.where(unassigned, nearest[turn], -np.inf)
        elif parts[1 - turn]:
            # empty partition: start as far as possible from the other one
            score = np.where(unassigned, nearest[1 - turn], -np.inf)
        else:
            score = np.where(unassigned, 0.0, -np.inf)
        k = int(np.argmax(score))
        parts[turn].append(k)
        unassigned[k] = False
        nearest[turn] = np.minimum(nearest[turn], angle[k])
        turn = 1 - turn
    return np.sort(parts[0]), np.sort(parts[1])


def covering_radius(subset, reference):
    """Largest axis angle from any reference direction to the subset."""
    ang = axis_angle(np.asarray(reference)[:, None, :],
                     np.asarray(subset)[None, :, :])
    return float(ang.min(axis=1).max())


def rician(clean, sigma2, rng):
    """Magnitude of the clean signal plus complex Gaussian noise."""
    clean = np.asarray(clean, dtype=float)
    if sigma2 == 0:
        return clean.copy()
    sd = np.sqrt(sigma2)
    re = clean + rng.normal(0.0, sd, clean.shape)
    im = rng.normal(0.0, sd, clean.shape)
    return np.sqrt(re ** 2 + im ** 2)


def generate(config=None):
    """Simulate one voxel.

    Fascicle axes are uniform on the sphere, weights i.i.d. U[0, 1] (not
    normalized), axial diffusivities uniform in ``axial_range``.

    Returns
    -------
    Dataset
    """
    config = SimulationConfig() if config is None else config
    rng = np.random.default_rng(config.seed)
    scheme = AcquisitionScheme(make_directions(config.n_directions,
                                               config.directions_seed),
                               config.b_value)
    family = TensorKernel(scheme)

    k = config.n_fascicles
    axes = random_unit_vectors(k, rng)
    weights = rng.uniform(0.0, 1.0, k)
    axial = rng.uniform(*config.axial_range, k)
    params = [TensorParams(v, a, config.radial) for v, a in zip(axes, axial)]
    truth_model = MixtureModel(weights, params, family)
    clean = truth_model.predict()
    if config.isotropic_weight:
        clean = clean + config.isotropic_weight * np.exp(
            -config.b_value * 1e-3 * config.isotropic_diffusivity)
    signal = rician(clean, config.noise_sigma2, rng)
    truth = GroundTruth(truth_model, clean, config.isotropic_weight,
                        config.isotropic_diffusivity)
    return Dataset(scheme=scheme, signal=signal,
                   partition=partition(scheme.directions), truth=truth,
                   config=asdict(config))


# -- serialization -----------------------------------------------------------

def dataset_to_dict(ds):
    d = {
        "version": FORMAT_VERSION,
        "scheme": {"b": ds.scheme.b_value,
                   "directions": ds.scheme.directions.tolist()},
        "signal": [float(x) for x in ds.signal],
        "partition": {"train": [int(i) for i in ds.train],
                      "test": [int(i) for i in ds.test]},
    }
    if ds.truth is not None:
        d["truth"] = ds.truth.to_dict()
    if ds.config is not None:
        cfg = dict(ds.config)
        cfg["axial_range"] = list(cfg["axial_range"])
        d["config"] = cfg
    return d


def check_version(d, kind="file"):
    version = str(d.get("version", ""))
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise ValueError(f"unsupported {kind} version {version!r}")


def dataset_from_dict(d):
    check_version(d, "dataset")
    try:
        scheme = AcquisitionScheme(np.array(d["scheme"]["directions"]),
                                   d["scheme"]["b"])
        signal = np.array(d["signal"], dtype=float)
        part = (np.array(d["partition"]["train"], dtype=int),
                np.array(d["partition"]["test"], dtype=int))
    except (KeyError, TypeError) as err:
        raise ValueError(f"malformed dataset: {err}") from err
    if len(signal) != len(scheme):
        raise ValueError("signal length does not match the scheme")
    truth = None
    if "truth" in d:
        t = d["truth"]
        comps = t["components"]
        model = MixtureModel([c["w"] for c in comps],
                             [TensorParams.from_dict(c) for c in comps],
                             TensorKernel(scheme))
        iso = t.get("isotropic", {})
        clean = np.array(t.get("clean_signal", model.predict()), dtype=float)
        truth = GroundTruth(model, clean, iso.get("w", 0.0),
                            iso.get("diffusivity", 3.0))
    return Dataset(scheme=scheme, signal=signal, partition=part, truth=truth,
                   config=d.get("config"))


def save_dataset(ds, path):
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh, indent=1)
        fh.write("\n")


def load_dataset(path):
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))
