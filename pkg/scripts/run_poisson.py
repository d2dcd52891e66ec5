"""Learn the Poisson Green's function and compare it with the closed form.

    python scripts/run_poisson.py --epochs 2000 --out runs/poisson
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from greencheb.experiments import ExperimentConfig, evaluate, learn, sigma_table, with_epochs
from greencheb.pipeline import relative_error, save_model
from greencheb.problems import ProblemSpec, poisson_green


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", type=float, default=0.0)
    ap.add_argument("--out", default="runs/poisson")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(with_epochs(ExperimentConfig(seed=a.seed), a.epochs), zeta=a.noise)
    prob = ProblemSpec("poisson")
    lm = learn(prob, cfg, log_every=100)
    save_model(out / "model.gcm", lm.model, lm.nets)
    np.savetxt(out / "loss.csv", np.column_stack([lm.train_loss, lm.val_loss]), delimiter=",",
               header="train,validation", comments="")
    res = evaluate(lm.model, prob, cfg) | {
        "relative_error": relative_error(lm.model, poisson_green),
        "sigma_head": sigma_table(lm.model).tolist(),
        "sigma_exact": (1 / (np.pi * np.arange(1, 6)) ** 2).tolist(),
        "seconds": lm.seconds,
    }
    (out / "summary.json").write_text(json.dumps(res, indent=2, default=float))
    print(json.dumps(res, indent=2, default=float))


if __name__ == "__main__":
    main()
