"""From a daily transition matrix to an annual generator.

Shows the exact logarithm, the first-order approximation, and how far the
four-decimal rounding of the daily matrix moves the annual rates.
"""

import numpy as np
from scipy.linalg import expm

from rsgbm.model import approximate_generator, generator_from_transition

Q = np.array([[0.7600, 0.2400], [0.0590, 0.9410]])
L = generator_from_transition(Q, 252)
print("exact generator\n", L.round(4))
print("round trip error", np.abs(expm(L / 252) - Q).max())
print("first-order generator\n", approximate_generator(Q, 252).round(4))

# rounding Q to four decimals leaves the generator uncertain at this scale
rng = np.random.default_rng(0)
spread = []
for _ in range(500):
    E = rng.uniform(-5e-5, 5e-5, (2, 2))
    E[:, 1] = -E[:, 0]
    spread.append(generator_from_transition(Q + E, 252) - L)
print("generator spread from rounding (max abs):", np.abs(spread).max().round(4))
