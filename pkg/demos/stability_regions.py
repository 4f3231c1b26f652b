"""Text rendering of the linear stability domains of FE, BE, CN and DOPRI5.

``#`` marks ``z = s * lambda`` where the method damps ``h' = lambda h``.
"""

import numpy as np

from proxode.stability import METHODS, stability_mask

re = np.linspace(-5.0, 3.0, 65)
im = np.linspace(-4.0, 4.0, 25)
Z = re[None, :] + 1j * im[::-1, None]
for method in METHODS:
    mask = stability_mask(method, Z)
    print(f"{method}  Re in [-5, 3], Im in [-4, 4]")
    for row in mask:
        print("".join("#" if m else "." for m in row))
    print()
