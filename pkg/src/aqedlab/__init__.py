"""Matrix-product-state laboratory for approximate quantum error detection.

Submodules:
    linalg      dense primitives, partial trace, Jordan profiling
    mps         site-independent MPS/MPO, transfer operators, contractions
    excitation  excitation-ansatz families and their matrix elements
    magnon      Heisenberg-XXX magnon descendants and their transfer operators
    aqedc       certificates, refutations and the boundary no-go experiment
    noise       d-local Kraus channels and detection-round simulation
    cli         experiment runner
"""

__version__ = "0.1.0"
