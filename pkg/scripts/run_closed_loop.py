#!/usr/bin/env python3
"""Train the desk profile on the synthetic corpus and score it with the
built-in oracles: aging-score gap closure, attribute preservation, and
identity verification. This is the end-to-end protocol the acceptance
suite gates on."""

import argparse
import json
from pathlib import Path

from a3gan.evaluation import closed_loop_metrics


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--variant", default="full")
    parser.add_argument("--identities", type=int, default=50)
    parser.add_argument("--image-size", type=int, default=64)
    args = parser.parse_args()

    metrics = closed_loop_metrics(
        args.variant, args.seed, args.iterations, args.out,
        n_identities=args.identities, image_size=args.image_size,
    )
    out = Path(args.out)
    (out / "closed_loop_metrics.json").write_text(json.dumps(metrics, indent=1) + "\n")
    print(json.dumps(metrics, indent=1))


if __name__ == "__main__":
    main()
