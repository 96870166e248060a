#!/usr/bin/env python3
"""Emit model T1 curves per loss channel for one device, as plottable CSV.

Example:
    python scripts/predict_t1_curves.py devices/b1.json --qceff 3.11e5 \
        --epsilon 0.25 --xqp 1e-9 --out b1_curves.csv

The output is long-format CSV (mechanism, mode, phi_ext_phi0, omega01_hz,
t1_s), one series per (mechanism, two_level/six_level) pair, ready for any
plotting tool.
"""

import argparse
import sys

from fluxt1.cli import cli


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("device", help="device parameter JSON file")
    parser.add_argument("--qceff", type=float, default=3.11e5)
    parser.add_argument("--epsilon", type=float, default=0.25)
    parser.add_argument("--xqp", type=float, default=1e-9)
    parser.add_argument("--flux-points", type=int, default=101)
    parser.add_argument("--out", default=None)
    args = parser.parse_args()

    mechanisms = ("capacitive,flux_noise,qp_junction,qp_array,"
                  "charge_line,flux_line,purcell,total")
    argv = [
        "predict-t1",
        "--device", args.device,
        "--flux-start", "0.0",
        "--flux-stop", "0.5",
        "--flux-points", str(args.flux_points),
        "--qceff", str(args.qceff),
        "--epsilon", str(args.epsilon),
        "--xqp", str(args.xqp),
        "--mechanisms", mechanisms,
        "--modes", "two_level,six_level",
    ]
    if args.out:
        argv += ["--out", args.out]
    return cli(argv)


if __name__ == "__main__":
    sys.exit(main())
