"""Smoke test for the hjbnav_py extension.

Build first:
    cargo build --release -p hjbnav-py --features extension-module
then run:
    python3 python/smoke_test.py

HJBNAV_PY_LIB may point at the built shared library directly.
"""

import importlib.util
import json
import math
import os
import random
import shutil
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_module():
    candidates = []
    if os.environ.get("HJBNAV_PY_LIB"):
        candidates.append(Path(os.environ["HJBNAV_PY_LIB"]))
    for profile in ("release", "debug"):
        for name in ("libhjbnav_py.so", "libhjbnav_py.dylib", "hjbnav_py.dll"):
            candidates.append(ROOT / "target" / profile / name)
    lib = next((c for c in candidates if c.exists()), None)
    if lib is None:
        sys.exit("hjbnav_py library not found; build it with "
                 "`cargo build --release -p hjbnav-py --features extension-module`")
    # the import machinery wants the module name as the file stem
    tmp = Path(tempfile.mkdtemp())
    target = tmp / ("hjbnav_py" + (".pyd" if lib.suffix == ".dll" else ".so"))
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("hjbnav_py", target)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def check(cond, msg):
    if not cond:
        raise AssertionError(msg)
    print("ok  ", msg)


def validate_schemas(model, scenario):
    try:
        import jsonschema
        from referencing import Registry, Resource
    except ImportError:
        print("skip schema validation (jsonschema not installed)")
        return
    docs = ROOT / "docs"
    schemas = {n: json.loads((docs / n).read_text()) for n in ("model.schema.json", "scenario.schema.json")}
    registry = Registry().with_resources(
        (s["$id"], Resource.from_contents(s)) for s in schemas.values())
    for name, doc in (("model.schema.json", model), ("scenario.schema.json", scenario)):
        jsonschema.Draft202012Validator(schemas[name], registry=registry).validate(doc)
    check(True, "model and scenario JSON match the schemas")


def main():
    h = load_module()
    print("hjbnav_py", h.__version__)

    rect = h.ElementShape.rectangle(4.0, 2.0)
    check(rect.signed_distance(3.0, 0.0) == 1.0, "signed distance outside the rectangle")
    check(rect.signed_distance(0.0, 0.0) < 0.0, "signed distance inside the rectangle")
    check(abs(rect.circumradius - math.sqrt(5.0)) < 1e-12, "circumradius")

    lin, const = h.vdot_affine(2.0, (0.5, -1.0), 0.1, 1.0)
    rng = random.Random(0)
    for _ in range(100):
        u = (rng.uniform(-1, 1), rng.uniform(-1, 1))
        affine = lin[0] * u[0] + lin[1] * u[1] + const
        critic = 0.5 * ((u[0] - 0.5) ** 2 + (u[1] + 1.0) ** 2) - 0.5 * (u[0] ** 2 + u[1] ** 2) - 1.0 + 0.1 * 2.0
        assert abs(affine - critic) < 1e-12
    check(True, "vdot_affine matches the critic form")

    for _ in range(50):
        cons = [((rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(-0.3, 1.0)) for _ in range(rng.randint(0, 4))]
        ug = (rng.uniform(-2, 2), rng.uniform(-2, 2))
        r = h.solve_qcqp(ug, cons, 1.0)
        if r["status"] != "optimal":
            continue
        best = h.qcqp_grid_search(ug, cons, 1.0, 201)
        assert r["kkt_residual"] <= 1e-8 and r["max_violation"] <= 1e-8, r
        assert best is None or r["objective"] <= best[1] + 1e-3
    check(True, "solve_qcqp agrees with the grid oracle")

    model, residuals = h.train(rect, motion=(0.8, 0.0), radius=6.0, epochs=200, qc=1.0, seed=3)
    check(len(residuals) == 200 and all(math.isfinite(r) for r in residuals), "train returns a finite history")
    check(model.velocity == (0.8, 0.0) and model.radius == 6.0 and model.qc == 1.0, "model metadata")
    again = h.ElementModel.from_json(model.to_json())
    check(again.to_json() == model.to_json(), "model JSON round trip")
    validate_schemas(json.loads(model.to_json()), json.loads(h.street_crossing_scenario()))
    mirrored = model.mirrored_x()
    check(abs(mirrored.value(-3.0, 0.5) - model.value(3.0, 0.5)) < 1e-9, "mirrored model")
    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "m.json")
        model.save(p)
        check(h.ElementModel.load(p).value(3.0, 1.5) == model.value(3.0, 1.5), "save and load")

    goal, _ = h.train(h.ElementShape.rectangle(2.0, 2.0), radius=6.0, epochs=100, qc=1.0)
    out = h.compose_step((0.0, -3.0), ((0.0, 3.0), goal), [((0.0, 0.0), model)], v_min=0.5, qc=1.0)
    check(math.hypot(*out["u"]) <= 1.0 + 1e-9 and len(out["values"]) == 1, "compose_step")

    xs, ys, vals = h.value_iteration(h.ElementShape.rectangle(1.0, 1.0), qc=1.0, half_width=3.0, n=31,
                                     range_radius=3.0, dt=0.05)
    check(len(xs) == 31 and len(vals) == 31 and vals[15][15] == 0.0, "value_iteration grid")

    scenario = json.loads(h.street_crossing_scenario())
    check(sum(e["role"] == "goal" for e in scenario["elements"]) == 1, "street crossing scenario")

    far = {
        "elements": [
            {"name": "goal", "shape": {"type": "rectangle", "width": 2.0, "height": 2.0},
             "position": [0.0, 3.0], "role": "goal", "model": "goal"},
            {"name": "car", "shape": {"type": "rectangle", "width": 4.0, "height": 2.0},
             "position": [30.0, 0.0], "motion": {"velocity": [0.8, 0.0]}, "role": "obstacle", "model": "car"},
        ],
        "agent_start": [0.0, 0.0], "dt": 0.05, "max_steps": 40, "goal_radius": 0.1,
    }
    traces = h.run_scenario(json.dumps(far), {"goal": goal, "car": model}, [0, 1], v_min=0.5, qc=1.0)
    check(len(traces) == 2 and all(t["outcome"] != "collision" for t in traces), "run_scenario")

    try:
        h.ElementShape.rectangle(-1.0, 1.0)
    except ValueError:
        check(True, "invalid shapes raise ValueError")
    else:
        raise AssertionError("negative width accepted")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
