from .lowrank import MatrixCompletionModel, TensorCPModel, sample_index_set
from .nn import OneLayerNNModel
from .demixing import DemixingModel

__all__ = [
    "MatrixCompletionModel",
    "TensorCPModel",
    "OneLayerNNModel",
    "DemixingModel",
    "sample_index_set",
]
