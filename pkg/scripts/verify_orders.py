"""Fitted convergence orders of the retraction and tangent projection over several seeds."""

import argparse
import json

from greencheb.manifold import verify_orders


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--rank", type=int, default=4)
    a = ap.parse_args()
    for seed in range(a.seeds):
        r = verify_orders(seed=seed, K=a.rank)
        print(json.dumps({"seed": seed, "retraction_slope": r["retraction_slope"],
                          "projection_slope": r["projection_slope"], "tangent_norm": r["tangent_norm"]}))


if __name__ == "__main__":
    main()
