"""Learn a model library and interpolate it to an unseen parameter.

Examples::

    python scripts/interpolation_study.py advection_diffusion 1,2,3 2.5
    python scripts/interpolation_study.py airy 1,5,10 7
    python scripts/interpolation_study.py airy 6,7,8 9
    python scripts/interpolation_study.py fractional_laplacian 0.8,0.9,0.95 0.85 --tol 1e-9
"""

import argparse
import json
from dataclasses import replace
from pathlib import Path

from greencheb.experiments import ExperimentConfig, interpolation_study, summary, with_epochs
from greencheb.pipeline import save_model


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("problem")
    ap.add_argument("thetas", help="comma separated library parameters")
    ap.add_argument("theta_star", type=float)
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--out", default=None, help="directory for model files and summary.json")
    a = ap.parse_args()
    cfg = replace(with_epochs(ExperimentConfig(seed=a.seed), a.epochs), tol=a.tol)
    thetas = [float(t) for t in a.thetas.split(",")]
    r = interpolation_study(a.problem, thetas, a.theta_star, cfg, log_every=500)
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        for m in r["models"]:
            save_model(out / f"{a.problem}_{m.theta:g}.gcm", m)
        (out / "summary.json").write_text(json.dumps(summary(r), indent=2, default=float))
    print(json.dumps(summary(r), indent=2, default=float))


if __name__ == "__main__":
    main()
