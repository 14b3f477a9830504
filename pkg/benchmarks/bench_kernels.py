"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--step]

Shapes are the ones a 128-example batch produces in NN-2 and LeNet. Each
row also reports whether both backends returned identical bytes. ``--step``
additionally times a full NN-2 training step under each backend (one
subprocess per backend, since the backend is chosen at import).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from trimsgd.kernels import available_backends
from trimsgd.rng import Rng

STEP_SNIPPET = """
import timeit, numpy as np
from trimsgd import kernels
from trimsgd.dataio import MiniBatch
from trimsgd.models import build_model
from trimsgd.optimize import LrSchedule, TrainClock, make_optimizer, trimsgd_train_step
from trimsgd.regularize import TrimNoiseConfig
from trimsgd.rng import Rng
m = build_model("NN2", 784, 10, 0)
rng = np.random.default_rng(0)
b = MiniBatch(np.arange(128), rng.random((128, 784)), rng.integers(1, 11, 128))
opt = make_optimizer("sgd", m.params)
clock = TrainClock(10**6)
cfg, sched, noise = TrimNoiseConfig(0.1, 0.2, "constant"), LrSchedule("constant", 1e-3, 10**6), Rng(0)
t = min(timeit.repeat(lambda: trimsgd_train_step(m, b, cfg, opt, sched, clock, noise), number=1, repeat={repeat}))
print(kernels.BACKEND, t)
"""


def cases():
    rng = np.random.default_rng(0)
    x784, w1 = rng.random((128, 784)), rng.normal(size=(784, 256))
    h, up = rng.normal(size=(128, 256)), rng.normal(size=(128, 256))
    img = rng.random((128, 1, 28, 28))
    conv2_in = rng.random((128, 6, 14, 14))
    cols = rng.normal(size=(128 * 10 * 10, 150))
    pool_in = rng.normal(size=(128, 6, 28, 28))
    losses = rng.exponential(size=128)
    labels = rng.integers(1, 11, size=60000)
    return [
        ("matmul 128x784 @ 784x256", "matmul", lambda k: k.matmul(x784, w1)),
        ("matmul_tn 256x128 @ 128x256", "matmul_tn", lambda k: k.matmul_tn(h, up)),
        ("colsum 128x256", "colsum", lambda k: k.colsum(up)),
        ("im2col LeNet conv1", "im2col", lambda k: k.im2col(img, 5, 1, 2)),
        ("im2col LeNet conv2", "im2col", lambda k: k.im2col(conv2_in, 5, 1, 0)),
        ("col2im LeNet conv2", "col2im", lambda k: k.col2im(cols, conv2_in.shape, 5, 1, 0)),
        ("maxpool forward 6x28x28", "maxpool", lambda k: k.maxpool2x2_forward(pool_in)),
        ("argsort_stable B=128", "argsort", lambda k: k.argsort_stable(losses)),
        ("label_noise n=60000", "noise", lambda k: k.label_noise(Rng(1).state, labels, 0.1, 10)),
        ("permutation n=60000", "perm", lambda k: k.permutation(Rng(1).state, 60000)),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def bench_kernels(repeat):
    backends = available_backends()
    names = list(backends)
    print(f"{'kernel':32s}" + "".join(f"{n:>12s}" for n in names) + f"{'speedup':>10s}{'identical':>11s}")
    for label, _, fn in cases():
        times, outs = [], []
        for n in names:
            k = backends[n]
            outs.append(fn(k))
            number = 1 if n == "python" else 5
            times.append(min(timeit.repeat(lambda: fn(k), number=number, repeat=repeat)) / number)
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        same = all(_same(outs[0], o) for o in outs[1:])
        print(f"{label:32s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + f"{speed:9.1f}x{str(same):>11s}")
    if "compiled" not in backends:
        print("compiled extension not built; only the fallback was timed")


def bench_step(repeat):
    print("\nfull NN-2 training step, B=128")
    for backend in ("python", "compiled"):
        env = dict(os.environ, TRIMSGD_BACKEND=backend)
        proc = subprocess.run([sys.executable, "-c", STEP_SNIPPET.format(repeat=repeat)], env=env,
                              capture_output=True, text=True)
        if proc.returncode != 0:
            print(f"  {backend}: unavailable")
            continue
        name, t = proc.stdout.split()
        print(f"  {name:10s} {float(t) * 1e3:8.1f} ms")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--step", action="store_true", help="also time a full training step per backend")
    args = ap.parse_args(argv)
    bench_kernels(args.repeat)
    if args.step:
        bench_step(args.repeat)


if __name__ == "__main__":
    main()
