#!/usr/bin/env python3
"""Writes the bundled scenarios (sim1.json, chain3.json).

sim1: five robots, 38 static objects, 15 m visibility, robot 2 anchored.
Robots 1 and 5 leave the object field through corridors that are farther than
the visibility radius from every object.
chain3: three robots on small circles around a compact object cluster, robot 1
anchored, bidirectional chain 1 <-> 2 <-> 3.
"""

import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))


def scaled_identity(n, s):
    return [[s if r == c else 0.0 for c in range(n)] for r in range(n)]


def heading(a, b):
    return math.atan2(b[1] - a[1], b[0] - a[0])


def looping_path(points, times):
    """Waypoints whose yaw follows the direction of travel (unwrapped)."""
    yaws = []
    prev = None
    for k in range(len(points)):
        a, b = points[k], points[(k + 1) % len(points)]
        y = heading(a, b)
        if prev is not None:
            while y - prev > math.pi:
                y -= 2 * math.pi
            while y - prev < -math.pi:
                y += 2 * math.pi
        yaws.append(y)
        prev = y
    out = [{"t": t, "position": p, "yaw": y} for t, p, y in zip(times, points, yaws)]
    # Close the loop at the start position with a full-turn-equivalent yaw.
    first = yaws[0]
    while first - prev > math.pi:
        first -= 2 * math.pi
    while first - prev < -math.pi:
        first += 2 * math.pi
    out.append({"t": times[-1] + (times[1] - times[0]), "position": points[0], "yaw": first})
    return out


def objects_in_box(rng, count, lo, hi, min_gap):
    objs = []
    while len(objs) < count:
        p = [rng.uniform(lo[i], hi[i]) for i in range(3)]
        if all(math.dist(p, q["position"]) >= min_gap for q in objs):
            rpy = [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-math.pi, math.pi)]
            objs.append({"id": len(objs) + 1, "position": [round(x, 3) for x in p], "rpy": [round(x, 4) for x in rpy]})
    return objs


def noise_block(s):
    return {
        "process": scaled_identity(6, s),
        "object": scaled_identity(6, s),
        "relative": scaled_identity(6, s),
        "absolute": scaled_identity(6, s),
        "initial_pose": scaled_identity(6, s),
    }


def sim1():
    rng = random.Random(20240501)
    objects = objects_in_box(rng, 38, (-35.0, -22.0, 0.0), (35.0, 25.0, 4.0), 4.0)
    robot1 = looping_path(
        [[-8.0, -15.0, 1.5], [-20.0, -15.0, 1.5], [-20.0, -55.0, 1.5], [12.0, -55.0, 1.5], [12.0, -15.0, 1.5]],
        [0.0, 30.0, 75.0, 150.0, 195.0],
    )
    robot5 = looping_path(
        [[22.0, 12.0, 2.5], [34.0, 12.0, 2.5], [62.0, 12.0, 2.5], [62.0, -18.0, 2.5], [30.0, -18.0, 2.5]],
        [0.0, 30.0, 70.0, 145.0, 190.0],
    )
    return {
        "name": "sim1",
        "seed": 0,
        "dt": 1.0,
        "steps": 300,
        "visibility_radius": 15.0,
        "N_o": 6,
        "robots": [
            {"id": 1, "model": "SE3", "trajectory": {"type": "waypoints", "loop": True, "points": robot1}},
            {"id": 2, "model": "SE3", "anchored": True,
             "trajectory": {"type": "circle", "center": [0.0, 0.0, 2.0], "radius": 12.0, "rate": 0.05}},
            {"id": 3, "model": "SE3",
             "trajectory": {"type": "circle", "center": [-20.0, 5.0, 2.0], "radius": 10.0, "rate": -0.07, "phase": 1.0}},
            {"id": 4, "model": "SE3",
             "trajectory": {"type": "circle", "center": [20.0, 5.0, 2.0], "radius": 10.0, "rate": 0.06, "phase": 2.0}},
            {"id": 5, "model": "SE3", "trajectory": {"type": "waypoints", "loop": True, "points": robot5}},
        ],
        "objects": objects,
        "graph": {"edges": [
            {"from": 2, "to": 1}, {"from": 1, "to": 2},
            {"from": 2, "to": 3}, {"from": 3, "to": 2},
            {"from": 2, "to": 4}, {"from": 4, "to": 2},
            {"from": 3, "to": 4}, {"from": 4, "to": 3},
            {"from": 4, "to": 5}, {"from": 5, "to": 4},
        ]},
        "noise": noise_block(0.01),
    }


def chain3():
    objects = [
        {"id": 1, "position": [2.0, 1.0, 0.5], "rpy": [0.0, 0.0, 0.3]},
        {"id": 2, "position": [-1.5, 2.0, 1.0], "rpy": [0.1, 0.0, -0.8]},
        {"id": 3, "position": [0.5, -2.0, 0.0], "rpy": [0.0, 0.2, 1.7]},
    ]
    return {
        "name": "chain3",
        "seed": 0,
        "dt": 1.0,
        "steps": 40,
        "visibility_radius": 6.0,
        "N_o": 6,
        "robots": [
            {"id": 1, "model": "SE3", "anchored": True,
             "trajectory": {"type": "circle", "center": [0.0, 0.0, 1.0], "radius": 2.0, "rate": 0.1}},
            {"id": 2, "model": "SE3",
             "trajectory": {"type": "circle", "center": [0.5, 0.0, 1.5], "radius": 2.5, "rate": -0.08, "phase": 2.0}},
            {"id": 3, "model": "SE3",
             "trajectory": {"type": "circle", "center": [-0.5, 0.5, 1.0], "radius": 3.0, "rate": 0.12, "phase": 4.0}},
        ],
        "objects": objects,
        "graph": {"edges": [
            {"from": 1, "to": 2}, {"from": 2, "to": 1},
            {"from": 2, "to": 3}, {"from": 3, "to": 2},
        ]},
        "noise": {
            "process": scaled_identity(6, 0.001),
            "object": scaled_identity(6, 0.01),
            "relative": scaled_identity(6, 0.01),
            "absolute": scaled_identity(6, 0.01),
            "initial_pose": scaled_identity(6, 0.01),
        },
    }


def write(name, doc):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    write("sim1.json", sim1())
    write("chain3.json", chain3())
