"""End-to-end benchmark runs shared by ``scripts/`` and the acceptance tests."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .manifold import ModelLibrary, SveModel, interpolate_models
from .pipeline import relative_error, test_error
from .problems import LOSS_NODES, DatasetFile, ProblemSpec, default_kernel, exact_green, make_dataset
from .ratnet import AdfSpec, TrainConfig, TrainData, to_green_model, train

TEST_SEED_OFFSET = 1000


@dataclass(frozen=True)
class ExperimentConfig:
    n_samples: int = 100
    n_test: int = 100
    sigma: float = 1e-2
    zeta: float = 0.0
    seed: int = 0
    tol: float | None = None
    max_rank: int = 256
    adf: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    # per-problem override of train.nodes; None means the LOSS_NODES table
    loss_nodes: dict | None = None

    def train_for(self, problem: ProblemSpec) -> TrainConfig:
        table = LOSS_NODES if self.loss_nodes is None else self.loss_nodes
        if problem.id in table:
            return replace(self.train, nodes=table[problem.id])
        return self.train

    def tol_for(self, problem: ProblemSpec) -> float:
        if self.tol is not None:
            return self.tol
        return 1e-9 if problem.id == "fractional_laplacian" else 2.22e-16


@dataclass
class LearnedModel:
    model: SveModel
    data: DatasetFile
    train_loss: list
    val_loss: list
    seconds: float
    nets: dict = field(default_factory=dict)
    adf: AdfSpec | None = None


def dataset_for(problem: ProblemSpec, cfg: ExperimentConfig, test: bool = False) -> DatasetFile:
    seed = cfg.seed + TEST_SEED_OFFSET if test else cfg.seed
    n = cfg.n_test if test else cfg.n_samples
    zeta = 0.0 if test else cfg.zeta
    return make_dataset(problem, default_kernel(problem, cfg.sigma), n, zeta=zeta, seed=seed)


def learn(problem: ProblemSpec, cfg: ExperimentConfig, log_every: int = 0) -> LearnedModel:
    """Generate data, train the network pair and compress it to an SVE model."""
    ds = dataset_for(problem, cfg)
    F, U = ds.subset(ds.train_idx)
    Fv, Uv = ds.subset(ds.val_idx)
    adf = AdfSpec(problem.domain, problem.domain, enabled=cfg.adf and not problem.periodic)
    t0 = time.perf_counter()
    res = train(TrainData(ds.x, ds.s, F, U), cfg.train_for(problem), adf, val=TrainData(ds.x, ds.s, Fv, Uv), log_every=log_every)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = to_green_model(res.netG, res.netH, adf, problem.domain, problem.domain,
                               cfg.tol_for(problem), problem.theta, cfg.max_rank,
                               zero_mean=problem.periodic)
    return LearnedModel(model, ds, res.train_loss, res.val_loss, time.perf_counter() - t0,
                        {"G": res.netG, "H": res.netH}, adf)


def evaluate(model: SveModel, problem: ProblemSpec, cfg: ExperimentConfig) -> dict:
    out = {"theta": problem.theta, "rank": model.rank, "test_error_pct": test_error(model, dataset_for(problem, cfg, test=True))}
    g = exact_green(problem)
    if g is not None:
        out["relative_error"] = relative_error(model, g)
    return out


def interpolation_study(problem_id: str, thetas, theta_star: float, cfg: ExperimentConfig, log_every: int = 0) -> dict:
    """Learn a library at ``thetas`` and score the model interpolated to ``theta_star``."""
    learned = [learn(ProblemSpec(problem_id, th), cfg, log_every) for th in thetas]
    library = ModelLibrary(tuple(lm.model for lm in learned))
    target = ProblemSpec(problem_id, theta_star)
    interp = interpolate_models(library, theta_star)
    return {
        "problem": problem_id,
        "thetas": list(map(float, thetas)),
        "theta_star": float(theta_star),
        "library": [evaluate(lm.model, lm.data.problem, cfg) | {"seconds": lm.seconds} for lm in learned],
        "interpolated": evaluate(interp, target, cfg) | {"flags": list(interp.flags),
                                                         "orthonormality_error": interp.orthonormality_error()},
        "models": [lm.model for lm in learned] + [interp],
    }


def with_epochs(cfg: ExperimentConfig, epochs: int) -> ExperimentConfig:
    return replace(cfg, train=replace(cfg.train, epochs=epochs))


def summary(study: dict) -> dict:
    """JSON-friendly copy of an :func:`interpolation_study` result."""
    return {k: v for k, v in study.items() if k != "models"}


def sigma_table(model: SveModel, k: int = 5) -> np.ndarray:
    return np.asarray(model.sigma[:k])
