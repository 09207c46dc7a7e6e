"""Single-thread timing of the estimation stages against grid size."""
import argparse
import time

from otsdc import PhantomSpec, make_pair
from otsdc.morozov import select_lambda
from otsdc.ot1d import column_field
from otsdc.spectral import regularize_field
from otsdc.unwarp import apply_correction


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 96, 128])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"{'n':>5}{'transport':>11}{'lambda':>9}{'filter':>9}{'unwarp':>9}{'ns/voxel':>10}")
    for n in args.sizes:
        _, _, pair = make_pair(PhantomSpec(dims=(n, n, n), noise_sigma=3.0))
        raw = column_field(pair)
        lam = select_lambda(raw, 0.1).lambda_star
        fld = regularize_field(raw, lam)
        t = [best_of(lambda: column_field(pair), args.repeats),
             best_of(lambda: select_lambda(raw, 0.1), args.repeats),
             best_of(lambda: regularize_field(raw, lam), args.repeats),
             best_of(lambda: apply_correction(pair, fld), args.repeats)]
        print(f"{n:5d}" + "".join(f"{x:9.3f}s" if i == 0 else f"{x:8.3f}s" for i, x in enumerate(t))
              + f"{1e9 * sum(t[:3]) / n ** 3:10.1f}")


if __name__ == "__main__":
    main()
