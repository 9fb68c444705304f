"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Reports the best-of-N wall time per call for the CSS filter (one objective
evaluation of a seasonal ARMA fit) and the Durbin-Levinson recursion, and
checks that both backends return identical results.
"""

import argparse
import timeit

import numpy as np

from kinn import _kernels_py

try:
    from kinn import _kernels as compiled
except ImportError:  # extension not built
    compiled = None


def _css_case(n: int):
    rng = np.random.default_rng(0)
    w = rng.normal(size=n)
    # (1,0,1)(0,1,1)_48 after seasonal differencing: AR lag 1, MA lags 1, 48, 49
    return (w, np.array([1]), np.array([0.6]), np.array([1, 48, 49]), np.array([0.3, -0.5, -0.15]), 0.0, 1)


def _rho(k: int):
    rng = np.random.default_rng(1)
    x = rng.normal(size=5000).cumsum()
    x -= x.mean()
    return np.array([np.dot(x[j:], x[:x.size - j]) for j in range(k + 1)]) / np.dot(x, x)


def _best(fn, repeat: int) -> float:
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        print("compiled kernels unavailable; build with 'pip install -e . --no-build-isolation'")
        return

    cases = [
        ("css_filter n=5600", _css_case(5600), "css_filter"),
        ("css_filter n=560", _css_case(560), "css_filter"),
        ("durbin_levinson K=60", (_rho(60),), "durbin_levinson"),
    ]
    print(f"{'kernel':<24}{'python':>12}{'compiled':>12}{'speedup':>10}  identical")
    for label, case, name in cases:
        py_fn, c_fn = getattr(_kernels_py, name), getattr(compiled, name)
        a, b = py_fn(*case), c_fn(*case)
        if isinstance(a, tuple):
            same = all(np.array_equal(x, y, equal_nan=True) for x, y in zip(a, b))
        else:
            same = np.array_equal(a, b, equal_nan=True)
        t_py = _best(lambda: py_fn(*case), args.repeat)
        t_c = _best(lambda: c_fn(*case), args.repeat)
        print(f"{label:<24}{t_py * 1e6:>10.1f}us{t_c * 1e6:>10.1f}us{t_py / t_c:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
