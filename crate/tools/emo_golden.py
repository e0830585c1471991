"""Independent EMO reference values for square faces on a square lattice.

Midpoint rule with 4096^2 cells over one quarter period, written with numpy
only. Prints `l s emo` rows; the goldens in the test suites come from here.
"""
import numpy as np


def emo_quad(l, s, n=4096):
    h = (s / 2) / n
    a = l - (np.arange(n) + 0.5) * h
    p = np.outer(a, a)
    return float(np.mean(p / (2 * l * l - p)))


if __name__ == "__main__":
    for l in [16, 32, 64, 128, 256, 512]:
        for s in [4, 8, 16]:
            print(l, s, repr(emo_quad(l, s)))
    print(16, 16 / 256, repr(emo_quad(16, 16 / 256)))
