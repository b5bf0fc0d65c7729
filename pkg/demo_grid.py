# demo_grid.py
from __future__ import annotations

from pathlib import Path

from adatriv import config

# (file name, settings) for the Procrustes comparison plus the RGD baselines
_GRID = [
    ("atriv-1-adam", {"algo": "atriv", "k": "1", "opt": "adam", "lr": "0.01"}),
    ("dtriv-1-adam", {"algo": "dtriv", "k": "1", "opt": "adam", "lr": "0.01"}),
    ("dtriv-100-adam", {"algo": "dtriv", "k": "100", "opt": "adam", "lr": "0.01"}),
    ("dtriv-inf-adam", {"algo": "dtriv", "k": "inf", "opt": "adam", "lr": "0.01"}),
    ("static-cayley-rmsprop", {"algo": "dtriv", "k": "inf", "opt": "rmsprop", "lr": "0.01", "trivialization": "cayley"}),
    ("atriv-1-rmsprop", {"algo": "atriv", "k": "1", "opt": "rmsprop", "lr": "0.01"}),
    ("atriv-1-theorem", {"algo": "atriv", "k": "1", "opt": "sgd", "lr": "theorem", "r": "3.14159"}),
    ("rgd", {"algo": "rgd", "lr": "0.05"}),
    ("rgd-momentum", {"algo": "rgd-momentum", "lr": "0.02", "mu": "0.9"}),
]


def main(directory: Path, n: int = 8, iters: int = 5000, seed: int = 53) -> int:
    directory.mkdir(parents=True, exist_ok=True)
    written = 0
    for name, settings in _GRID:
        lines = [
            "problem=procrustes",
            f"n={n}",
            f"iters={iters}",
            f"seed={seed}",
            f"out={name}.csv",
            *(f"{k}={v}" for k, v in settings.items()),
        ]
        (directory / f"{name}.cfg").write_text("\n".join(lines) + "\n", encoding="utf-8")
        written += 1

    print(f"Wrote {written} configs to {directory}; run them with: python cli.py grid {directory}")
    return written


if __name__ == "__main__":
    import sys

    target = Path(sys.argv[1]) if len(sys.argv) > 1 else config.OUTPUT_DIR / "demo"
    main(target)
