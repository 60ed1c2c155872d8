"""Matrix-valued stochastic calculus on the Hilbert space of square matrices.

Subpackages:

* :mod:`matsde.matspace`   -- trace inner product, basis, block products
* :mod:`matsde.brownian`   -- matrix Brownian motion on time grids
* :mod:`matsde.integrator` -- Ito integrals, quadratic variation, isometry
* :mod:`matsde.sde`        -- Euler-Maruyama, Picard iteration, bounds
* :mod:`matsde.calculus`   -- matrix gradients, Hessians, the Ito formula
* :mod:`matsde.fxmarket`   -- bid/ask exchange-rate matrices and simulation
* :mod:`matsde.cli`        -- the ``matsde`` verification command line
"""

from matsde import (  # noqa: F401
    brownian,
    calculus,
    fxmarket,
    integrator,
    matspace,
    sde,
)

__version__ = "0.1.0"
