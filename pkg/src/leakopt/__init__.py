"""Leakage-aware single-qubit pulse optimization on a simulated transmon.

Modules:

* :mod:`leakopt.quantum` - multi-level transmon dynamics, channels, fidelity
* :mod:`leakopt.pulses` - DRAG and piecewise-constant pulses, filtering, files
* :mod:`leakopt.clifford` - Clifford group, RB sequences, the RB cost
* :mod:`leakopt.cmaes` / :mod:`leakopt.optimizer` - CMA-ES and the calibration loop
* :mod:`leakopt.rb` - RB datasets, decay fits, leakage RB
* :mod:`leakopt.config` / :mod:`leakopt.cli` - configuration and command line
"""

__version__ = "0.1.0"
