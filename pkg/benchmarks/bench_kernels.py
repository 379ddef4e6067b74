"""Compare the compiled kernel backend against the pure-numpy fallback.

Times the two hot paths (fingertip FK + Jacobian, farthest-point sampling)
at the kernel level, then a full damped-least-squares solve end to end under
each backend.  Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats 200]
"""

from __future__ import annotations

import argparse
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from dexforge import load_hand
from dexforge._kernels import _pure

try:
    from dexforge._kernels import _core
except ImportError:
    _core = None

HANDS = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "hands"


def kin_args(model, q):
    kin = model.kin
    return (kin.parent_joint, kin.pre_rot, kin.pre_trans, kin.axis,
            np.asarray(q, dtype=float), kin.topo_order)


def tips_args(model, q):
    kin = model.kin
    return kin_args(model, q) + (kin.tip_parent, kin.tip_trans, kin.reach)


def bench(fn, repeats: int) -> float:
    fn()  # warm up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def fmt(seconds: float) -> str:
    return f"{seconds * 1e6:9.1f} us"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    if _core is None:
        print("compiled backend not built; showing pure-numpy timings only\n")

    backends = [("pure", _pure)] + ([("compiled", _core)] if _core else [])
    rng = np.random.default_rng(0)

    print(f"{'kernel':<34}" + "".join(f"{name:>14}" for name, _ in backends)
          + ("       speedup" if _core else ""))
    rows = []
    for hand in ("twig", "inspire_like", "wuji_like"):
        model = load_hand(HANDS / f"{hand}.hand.json")
        q = rng.uniform(model.kin.lower, model.kin.upper)
        a = tips_args(model, q)
        rows.append((f"fk_tips_jac [{hand}]",
                     [bench(lambda m=m: m.fk_tips_jac(*a), args.repeats)
                      for _, m in backends]))
    for n_pts, n_keep in ((2_000, 256), (20_000, 1_024)):
        pts = rng.normal(size=(n_pts, 3))
        rows.append((f"fps_select [{n_pts} -> {n_keep}]",
                     [bench(lambda m=m: m.fps_select(pts, n_keep, 0),
                            max(5, args.repeats // 20))
                      for _, m in backends]))
    for label, times in rows:
        line = f"{label:<34}" + "".join(fmt(t).rjust(14) for t in times)
        if _core:
            line += f"{times[0] / times[1]:11.1f} x"
        print(line)

    # end-to-end solve under each backend (separate processes so the import
    # switch actually takes effect)
    print("\nsolve_ik end to end (100 random targets per hand):")
    sys.stdout.flush()
    script = r"""
import time, numpy as np
from dexforge import load_hand
from dexforge._kernels import backend
from dexforge.kinematics import fingertip_positions
from dexforge.retarget import retarget_frame
from pathlib import Path

hands = Path({hands!r})
rng = np.random.default_rng(0)
t_total = 0.0
for hand in ("twig", "inspire_like", "wuji_like"):
    model = load_hand(hands / (hand + ".hand.json"))
    lo, hi = model.kin.lower, model.kin.upper
    targets = [fingertip_positions(model, rng.uniform(lo, hi)) for _ in range(100)]
    t0 = time.perf_counter()
    for t in targets:
        retarget_frame(model, t)
    t_total += time.perf_counter() - t0
print(f"  {{backend():>8}}: {{t_total * 1e3:8.1f}} ms")
""".format(hands=str(HANDS))
    for force_pure in (True, False):
        env = {k: v for k, v in os.environ.items() if k != "DEXFORGE_PURE_PYTHON"}
        if force_pure:
            env["DEXFORGE_PURE_PYTHON"] = "1"
        subprocess.run([sys.executable, "-c", script], env=env, check=True)


if __name__ == "__main__":
    main()
