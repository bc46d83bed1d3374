"""Regenerate the demo scenes and the failing validation fixtures."""
import json
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
FIXTURES = HERE.parent / "tests" / "fixtures"
HALF = float(np.deg2rad(20.0))
OMEGA = 2 * np.pi * (1 - np.cos(HALF))


def plane_targets(n, seed, radius=0.8, height=5.0):
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random(n))
    th = 2 * np.pi * rng.random(n)
    pts = np.column_stack([r * np.cos(th), r * np.sin(th), np.full(n, height)])
    w = rng.random(n) + 0.5
    return pts, w / w.sum() * OMEGA


def near_scene(kappa, r0, tau=0.2, n=5, seed=1, b1=None):
    pts, w = plane_targets(n, seed)
    p1 = float(np.linalg.norm(pts[0]))
    if b1 is None:
        if kappa < 1:
            b1 = kappa * p1 + 0.5 * r0 * (1 - kappa) ** 2 / (1 + kappa)
        else:
            sup = float(np.max(np.linalg.norm(pts, axis=1)))
            b1 = kappa * p1 - 0.5 * (kappa - 1) * r0**4 / (8 * sup**3)
    return {
        "kappa": kappa,
        "dimension": 3,
        "mode": "near_lt1" if kappa < 1 else "near_gt1",
        "source": {"axis": [0.0, 0.0, 1.0], "half_angle": HALF, "density": "uniform"},
        "targets": [{"point": p.tolist(), "weight": float(g)} for p, g in zip(pts, w)],
        "r0": r0,
        "tau": tau,
        "solver": {"mass_tol": 1e-3, "b1": b1, "resolution": 20000},
    }


def write(doc, path):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def main():
    write(near_scene(2 / 3, 0.6), HERE / "demo_near_lt1.json")
    write(near_scene(1.5, 0.4), HERE / "demo_near_gt1.json")

    single = near_scene(2 / 3, 0.6, n=1)
    single["targets"][0]["point"] = [0.0, 0.0, 5.0]
    single["targets"][0]["weight"] = OMEGA
    single["solver"]["b1"] = 2 / 3 * 5.0 + 0.01
    write(single, HERE / "demo_single.json")

    far_dirs = np.array([[0.05, 0.0, 1.0], [-0.05, 0.04, 1.0], [0.0, -0.06, 1.0]])
    far_dirs /= np.linalg.norm(far_dirs, axis=1, keepdims=True)
    write(
        {
            "kappa": 2 / 3,
            "dimension": 3,
            "mode": "far_lt1",
            "source": {"axis": [0.0, 0.0, 1.0], "half_angle": HALF, "density": "uniform"},
            "targets": [{"point": m.tolist(), "weight": OMEGA / 3} for m in far_dirs],
            "solver": {"mass_tol": 1e-3, "b1": 1.0},
        },
        HERE / "demo_far_lt1.json",
    )
    write(
        {
            "kappa": 2.0,
            "dimension": 2,
            "mode": "ma_bvp",
            "source": {"polygon": [[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]], "density": "uniform"},
            "targets": [
                {"point": [-1.0, 0.0], "weight": 0.3},
                {"point": [1.0, 0.2], "weight": 0.45},
                {"point": [0.1, 1.0], "weight": 0.25},
            ],
            "solver": {"mass_tol": 1e-7, "b1": 0.0},
        },
        HERE / "demo_ma_bvp.json",
    )

    # single oval aimed below the plane x3 = 0, for the Jacobian residual
    tilt = np.deg2rad(20.0)
    half = float(np.deg2rad(10.0))
    p = np.array([5.0, 0.0, -0.5])
    omega = 2 * np.pi * (1 - np.cos(half))
    k = 2 / 3
    r0 = 0.1 * np.linalg.norm(p) / (1 + k)
    write(
        {
            "kappa": k,
            "dimension": 3,
            "mode": "near_lt1",
            "source": {"axis": [float(np.cos(tilt)), 0.0, float(np.sin(tilt))], "half_angle": half, "density": "uniform"},
            "targets": [{"point": p.tolist(), "weight": omega}],
            "r0": r0,
            "tau": 0.1,
            "solver": {"b1": k * float(np.linalg.norm(p)) + 0.5 * r0 * (1 - k) ** 2 / (1 + k)},
        },
        HERE / "demo_residual.json",
    )

    FIXTURES.mkdir(parents=True, exist_ok=True)
    h1 = near_scene(2 / 3, 0.6, tau=0.5)
    write(h1, FIXTURES / "fail_h1.json")
    write(near_scene(2 / 3, 0.7), FIXTURES / "fail_h2.json")
    h3 = near_scene(1.5, 0.4)
    h3["source"]["half_angle"] = float(np.deg2rad(40.0))
    write(h3, FIXTURES / "fail_h3.json")
    write(near_scene(1.5, 0.5), FIXTURES / "fail_h4.json")
    bad = near_scene(2 / 3, 0.6)
    for t in bad["targets"]:
        t["weight"] *= 1 + 1e-3
    write(bad, FIXTURES / "fail_conservation.json")


if __name__ == "__main__":
    main()
