"""Simulator of an NV-diamond network node: a hybrid electron-nuclear-photon GHZ
witness and repeated three-qubit repetition-code correction with feedback."""

__version__ = "0.1.0"

from .analysis import FitResult, PopulationVector, bootstrap_ci, fit_exponential, mitigate_readout
from .core import Backend, KrausChannel, PauliString, QuantumState, QubitId, Register, Role
from .ghz import JointBasis, WitnessResult, estimate_witness, measure_joint
from .noise import ConfusionMatrix, NoiseModel, load_noise
from .qec import LogicalPrep, ShotRecord, SyndromeRecord, decode, run_qec

__all__ = [
    "Backend", "ConfusionMatrix", "FitResult", "JointBasis", "KrausChannel", "LogicalPrep",
    "NoiseModel", "PauliString", "PopulationVector", "QuantumState", "QubitId", "Register", "Role",
    "ShotRecord", "SyndromeRecord", "WitnessResult", "bootstrap_ci", "decode", "estimate_witness",
    "fit_exponential", "load_noise", "measure_joint", "mitigate_readout", "run_qec",
]
