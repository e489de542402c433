"""Binary matrix factorization classifier with a simulated annealing QUBO solver."""

from .annealer import (
    AnnealSchedule,
    BruteForceSolver,
    SimulatedAnnealingSolver,
    ZeroSolver,
    auto_schedule,
    make_solver,
    simulated_anneal,
)
from .classify import ClassifierModel, evaluate, infer, train_classifier
from .estimators import BinaryMatrixFactorization, NBMFClassifier, NMFClassifier
from .exceptions import (
    CapacityError,
    IdxParseError,
    ModelFormatError,
    ShapeError,
    ValidationError,
)
from .factorize import NbmfModel, TrainConfig, load_model, save_model, train
from .nmf import nmf_train, train_nmf_classifier
from .qubo import QuboProblem, QuboSolution, brute_force_solve, build_column_qubo

__version__ = "0.1.0"
