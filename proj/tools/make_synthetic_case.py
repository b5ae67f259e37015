#!/usr/bin/env python3
"""Writes a seeded random meshed case (connected, no parallel lines).

Used for the 118-bus-scale tests: same bus and line counts as the merged
IEEE 118-bus network, random reactances.
"""
import argparse
import json
import random


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--name", default="synthetic118")
    ap.add_argument("--buses", type=int, default=118)
    ap.add_argument("--lines", type=int, default=169)
    ap.add_argument("--sources", type=int, default=19)
    ap.add_argument("--seed", type=int, default=118)
    ap.add_argument("--out", required=True)
    a = ap.parse_args()

    rng = random.Random(a.seed)
    edges = []
    seen = set()
    for b in range(1, a.buses):
        # attach to a nearby earlier bus so the graph stays grid-like
        p = rng.randrange(max(0, b - 6), b)
        edges.append((p, b))
        seen.add((p, b))
    while len(edges) < a.lines:
        u = rng.randrange(a.buses)
        v = u + rng.randint(1, 8)
        if v >= a.buses or (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append((u, v))
    lines = [{"id": i, "from": u, "to": v, "x": round(rng.uniform(0.005, 0.08), 5)}
             for i, (u, v) in enumerate(edges)]
    buses = sorted(rng.sample(range(a.buses), a.sources))
    sources = [{"bus": b, "emf": 1.0, "x": round(rng.uniform(0.02, 0.15), 5)} for b in buses]
    doc = {"name": a.name, "buses": a.buses, "lines": lines, "sources": sources}
    with open(a.out, "w") as f:
        f.write(json.dumps(doc, indent=2) + "\n")


if __name__ == "__main__":
    main()
