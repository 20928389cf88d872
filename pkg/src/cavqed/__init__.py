"""Cavity QED of a single emitter in a vibrating open microcavity.

Submodules
----------
cqed         Lindblad model, adiabatic-elimination rates, driven steady state
lineshape    Voigt densities and linewidth deconvolution
vibration    PSD/RMS analysis of cavity-length fluctuations
sidebands    sideband linewidth calibration and resonance sweeps
decay        vibration-averaged decay model and lifetime fits
correlation  g2 models, HBT post-selection, intensity-gated lifetimes
optics       transfer-matrix cavity modes, field quantization, g0
efficiency   coupling-efficiency ledger and quantum-efficiency bounds
fitting      least squares, ODR, clipping, Monte-Carlo propagation
synth        synthetic datasets with known truth
io, config   file formats and run configuration
cli          command-line entry point
"""

__version__ = "0.1.0"

from .fitting import ConvergenceError, FitError, MeasuredValue  # noqa: E402

__all__ = ["__version__", "MeasuredValue", "FitError", "ConvergenceError"]
