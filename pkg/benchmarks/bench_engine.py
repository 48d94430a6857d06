"""Throughput of the compiled event loop against the pure-Python fallback.

    python benchmarks/bench_engine.py [--replicas N]

Both engines run the same seeded workloads; the script checks that the final
tracked positions agree before reporting events per second.
"""

import argparse
import time

from shocklab import engine
from shocklab.clocks import derive_seed
from shocklab.dynamics import CoupledEnsemble, CouplingCheck, make_initial

WORKLOADS = {
    "step p=0.75 t=200": lambda: ([make_initial("step", 0.75, watch=(1, 3))], 0.75, 200.0, None),
    "shock triple p=1 t=400": lambda: (
        [make_initial(k, 1.0, 400.0, watch=(1, 3), max_label=3) for k in ("shock", "block_a", "block_b")],
        1.0, 400.0, CouplingCheck(0, 1, 2, 3, exact=True)),
    "shock triple p=0.75 t=100": lambda: (
        [make_initial(k, 0.75, 100.0, watch=(1, 3)) for k in ("shock", "block_a", "block_b")],
        0.75, 100.0, CouplingCheck(0, 1, 2, 3, exact=False)),
    "reversed step p=0.75 t=1024": lambda: ([make_initial("reversed_step", 0.75)], 0.75, 1024.0, None),
}


def run(name, eng, replicas):
    events, positions = 0, []
    start = time.perf_counter()
    for r in range(replicas):
        cfgs, p, t, check = WORKLOADS[name]()
        ens = CoupledEnsemble(cfgs, derive_seed(7, r), p=p, coupling=check, engine=eng)
        ens.evolve(t)
        events += ens.n_events
        positions.append(tuple(ens.position(m, n) for m, c in enumerate(cfgs)
                               for n in range(c.watch_lo, c.watch_hi + 1)))
    return time.perf_counter() - start, events, positions


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--replicas", type=int, default=2)
    args = ap.parse_args()
    engines = engine.available()
    print(f"{'workload':<30}{'engine':>8}{'seconds':>10}{'Mev/s':>9}{'speedup':>9}")
    for name in WORKLOADS:
        base = ref = None
        for eng in reversed(engines):
            secs, events, pos = run(name, eng, args.replicas)
            if ref is None:
                ref = pos
            elif pos != ref:
                raise SystemExit(f"{name}: engines disagree")
            rate = events / secs / 1e6
            base = base or secs
            print(f"{name:<30}{eng:>8}{secs:>10.3f}{rate:>9.2f}{base / secs:>8.1f}x")


if __name__ == "__main__":
    main()
