"""KY = 1: the average substrate under periodic forcing, classical versus fractional.

For the first-order derivative the average of ln(s_in - s) is fixed, so no
periodic law changes s_av. The sliding-memory derivative breaks the chain rule
behind that argument. Run with ``python demos/ky_one.py``.
"""

import numpy as np

from fracchemostat.bangbang import BangBangControl, correct_state, mean_adjust
from fracchemostat.grid import PeriodicGrid
from fracchemostat.model import BASELINE, s_bar


def main():
    p0 = BASELINE.replace(K=1.0 / BASELINE.Y)
    g = PeriodicGrid(p0.T, 400)
    print(f"s_bar = {s_bar(p0):.4f}")
    for alpha in (0.85, 0.95, 0.99, 1.0):
        p = p0.replace(alpha=alpha)
        bb = BangBangControl(p.D_min, p.D_max, p.T, (3.1, 14.4), initial_high=True,
                             resolution=g.spacing)
        bb = mean_adjust(bb, p, max_shift=np.inf)
        s = correct_state(p, bb, g.sample(lambda t: 2.0 + 0 * t), mode="average").state
        print(f"alpha = {alpha:4}: two-level law gives s_av = {s.mean():.5f}")


if __name__ == "__main__":
    main()
