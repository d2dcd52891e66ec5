"""Relative error of learned Poisson kernels against the noise level zeta."""

import argparse
import json
from dataclasses import replace

from greencheb.experiments import ExperimentConfig, dataset_for, learn, with_epochs
from greencheb.pipeline import relative_error, test_error
from greencheb.problems import ProblemSpec, poisson_green


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zetas", default="0,0.2,0.4,0.6")
    ap.add_argument("--epochs", type=int, default=2000)
    ap.add_argument("--out", default="noise_study.json")
    a = ap.parse_args()
    prob = ProblemSpec("poisson")
    rows = []
    for z in map(float, a.zetas.split(",")):
        cfg = replace(with_epochs(ExperimentConfig(), a.epochs), zeta=z)
        lm = learn(prob, cfg)
        test = dataset_for(prob, cfg, test=True)
        rows.append({"zeta": z, "relative_error": relative_error(lm.model, poisson_green),
                     "test_error_clean_pct": test_error(lm.model, test), "rank": lm.model.rank})
        print(json.dumps(rows[-1]), flush=True)
    with open(a.out, "w") as fh:
        json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
