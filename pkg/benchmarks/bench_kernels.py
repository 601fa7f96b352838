"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is timed on the same inputs with both backends; the table shows
the best of ``--repeat`` rounds and the speed-up of the compiled core.
"""

import argparse
import timeit

import numpy as np

from poisim import _kernels
from poisim.dynamics import SocialForceParams
from poisim.exposure import DEFAULT_TABLE
from poisim.scenario import RoomSpec


def cases(rng):
    p, room = SocialForceParams(), RoomSpec()
    args = p.kernel_args(room)
    for n in (20, 60, 200):
        pos = rng.uniform(1, 21, (n, 2))
        vel = rng.normal(0, 0.5, (n, 2))
        tgt = rng.uniform(1, 21, (n, 2))
        mov = (rng.random(n) < 0.8).astype(np.uint8)

        def advance(k, pos=pos, vel=vel, tgt=tgt, mov=mov):
            k.advance(pos.copy(), vel.copy(), tgt, mov, *args, 0.04, p.max_speed)

        yield f"advance n={n}", advance, 50
    for n in (10, 60, 200):
        pts = rng.uniform(0.2, 21.8, (n, 2))
        yield f"voronoi n={n}", lambda k, pts=pts: k.voronoi_areas(pts, 22.0, 22.0), 20
    t = DEFAULT_TABLE
    for n_sus, n_org in ((58, 20), (58, 200)):
        sus = rng.uniform(0, 22, (n_sus, 2))
        org = rng.uniform(0, 22, (n_org, 2))
        ages = rng.uniform(0, 15, n_org)

        def exposure(k, sus=sus, org=org, ages=ages):
            k.exposure_increment(sus, org, ages, t.edges, t.max_range, t.a, t.b, t.c)

        yield f"exposure {n_sus}x{n_org}", exposure, 200


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = list(_kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled kernels not built; timing the fallback only")
    print(f"{'kernel':<22}" + "".join(f"{b + ' (us)':>16}" for b in backends)
          + ("   speed-up" if len(backends) > 1 else ""))
    for name, fn, number in cases(np.random.default_rng(0)):
        times = []
        for b in backends:
            k = _kernels.get_backend(b)
            best = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat))
            times.append(best / number * 1e6)
        line = f"{name:<22}" + "".join(f"{t:>16.1f}" for t in times)
        if len(times) > 1:
            line += f"   {times[0] / times[1]:>7.1f}x"
        print(line)


if __name__ == "__main__":
    main()
