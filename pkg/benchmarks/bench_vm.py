"""Compare the compiled and pure-Python VM kernels on the same workloads.

    python3 benchmarks/bench_vm.py [--repeat N]
"""

import argparse
import time

from semid import _vmcore_py, vm
from semid.asm import assemble
from semid.corpus import fixtures_path, load_corpus, select
from semid.explore import FuzzConfig, explore_corpus

try:
    from semid import _vmcore
except ImportError:
    _vmcore = None

SPIN = """
.func spin xa
    li r2, 0
    li r3, 200000
loop:
    addi r2, 1
    xor r4, r2
    bne r2, r3, loop
    mov r0, r4
    ret
.end
"""


def timed(kernel, fn, repeat):
    vm._kernel = kernel
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _vmcore is None:
        raise SystemExit("compiled kernel not built; run `pip install --no-build-isolation -e .`")

    spin = assemble(SPIN)
    records = select(load_corpus(fixtures_path()), variants={"xa-O2"})
    workloads = {
        "spin loop (600k instrs)": lambda: vm.execute(spin, vm.new_state(spin.dialect)),
        "explore xa-O2 corpus": lambda: explore_corpus(records, FuzzConfig(max_executions=200)),
    }
    original = vm._kernel
    try:
        print(f"{'workload':28s} {'native s':>10s} {'python s':>10s} {'speedup':>8s}")
        for name, fn in workloads.items():
            native = timed(_vmcore, fn, args.repeat)
            pure = timed(_vmcore_py, fn, args.repeat)
            print(f"{name:28s} {native:10.4f} {pure:10.4f} {pure / native:7.1f}x")
    finally:
        vm._kernel = original


if __name__ == "__main__":
    main()
