"""Generate the packaged 39-bus New England case file.

Topology, loads, and generator capacities are the standard New England
test-system constants (10 generators at buses 30-39, 46 branches; transformer
taps are folded into the branch susceptance as 1/(x*tap)).  Buses are written
0-indexed.  Line limits are symmetric +/-1600 MW and generator costs are
drawn uniformly from [10, 50] $/MWh with a fixed recorded seed, so the file
is reproducible bit for bit.

Usage: python3 scripts/make_case39.py [output.json]
"""

import json
import sys
from pathlib import Path

import numpy as np

COST_SEED = 3901
LINE_LIMIT_MW = 1600.0

# branch constants: (from_bus, to_bus, reactance_pu, tap_ratio); 1-indexed buses
BRANCHES = [
    (1, 2, 0.0411, 0.0), (1, 39, 0.0250, 0.0), (2, 3, 0.0151, 0.0),
    (2, 25, 0.0086, 0.0), (2, 30, 0.0181, 1.025), (3, 4, 0.0213, 0.0),
    (3, 18, 0.0133, 0.0), (4, 5, 0.0128, 0.0), (4, 14, 0.0129, 0.0),
    (5, 6, 0.0026, 0.0), (5, 8, 0.0112, 0.0), (6, 7, 0.0092, 0.0),
    (6, 11, 0.0082, 0.0), (6, 31, 0.0250, 1.070), (7, 8, 0.0046, 0.0),
    (8, 9, 0.0363, 0.0), (9, 39, 0.0250, 0.0), (10, 11, 0.0043, 0.0),
    (10, 13, 0.0043, 0.0), (10, 32, 0.0200, 1.070), (12, 11, 0.0435, 1.006),
    (12, 13, 0.0435, 1.006), (13, 14, 0.0101, 0.0), (14, 15, 0.0217, 0.0),
    (15, 16, 0.0094, 0.0), (16, 17, 0.0089, 0.0), (16, 19, 0.0195, 0.0),
    (16, 21, 0.0135, 0.0), (16, 24, 0.0059, 0.0), (17, 18, 0.0082, 0.0),
    (17, 27, 0.0173, 0.0), (19, 20, 0.0138, 1.060), (19, 33, 0.0142, 1.070),
    (20, 34, 0.0180, 1.009), (21, 22, 0.0140, 0.0), (22, 23, 0.0096, 0.0),
    (22, 35, 0.0143, 1.025), (23, 24, 0.0350, 0.0), (23, 36, 0.0272, 1.000),
    (25, 26, 0.0323, 0.0), (25, 37, 0.0232, 1.025), (26, 27, 0.0147, 0.0),
    (26, 28, 0.0474, 0.0), (26, 29, 0.0625, 0.0), (28, 29, 0.0151, 0.0),
    (29, 38, 0.0156, 1.025),
]

# (bus, pmax_mw); pmin is 0 for every unit
GENERATORS = [
    (30, 1040.0), (31, 646.0), (32, 725.0), (33, 652.0), (34, 508.0),
    (35, 687.0), (36, 580.0), (37, 564.0), (38, 865.0), (39, 1100.0),
]

# nonzero bus loads in MW, 1-indexed
LOADS = {
    1: 97.6, 3: 322.0, 4: 500.0, 7: 233.8, 8: 522.0, 9: 6.5, 12: 8.53,
    15: 320.0, 16: 329.0, 18: 158.0, 20: 680.0, 21: 274.0, 23: 247.5,
    24: 308.6, 25: 224.0, 26: 139.0, 27: 281.0, 28: 206.0, 29: 283.5,
    31: 9.2, 39: 1104.0,
}

SLACK_BUS = 31  # 1-indexed


def build_case():
    rng = np.random.default_rng(COST_SEED)
    costs = rng.uniform(10.0, 50.0, size=len(GENERATORS))
    case = {
        "name": "new_england_39",
        "slack_bus": SLACK_BUS - 1,
        "buses": [
            {"id": i, "demand_mw": LOADS.get(i + 1, 0.0)} for i in range(39)
        ],
        "lines": [
            {
                "from": f - 1,
                "to": t - 1,
                "susceptance": 1.0 / (x * (tap if tap > 0 else 1.0)),
                "limit_mw": LINE_LIMIT_MW,
            }
            for f, t, x, tap in BRANCHES
        ],
        "generators": [
            {"bus": bus - 1, "pmin_mw": 0.0, "pmax_mw": pmax, "cost_per_mw": round(c, 4)}
            for (bus, pmax), c in zip(GENERATORS, costs)
        ],
        "meta": {
            "source": "New England 39-bus test system",
            "cost_seed": COST_SEED,
            "cost_range": [10.0, 50.0],
        },
    }
    return case


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else (
        Path(__file__).resolve().parent.parent / "src" / "nkscreen" / "cases" / "case39.json"
    )
    case = build_case()
    out.write_text(json.dumps(case, indent=1) + "\n")
    total = sum(LOADS.values())
    cap = sum(p for _, p in GENERATORS)
    print(f"wrote {out}: {len(case['lines'])} lines, {len(case['generators'])} generators, "
          f"load {total:.2f} MW, capacity {cap:.0f} MW")


if __name__ == "__main__":
    main()
