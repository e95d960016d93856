"""Toy-scale neural partial-to-whole channel predictor.

Consumes dataset directories exported by the ebcast toolkit and trains a
three-subnetwork predictor (basis features, unrolled completion, dual-input
fusion) with an optional per-pixel recurrent head for next-step prediction.
"""

__version__ = "0.1.0"

from .data import (DatasetDir, basis_planes, complex_to_planes,
                   planes_to_complex, present_arrays, sequence_arrays)
from .errors import (ConfigError, DataFormatError, EbnetError, ShapeError,
                     WeightsError)
from .model import (BasisFeatureNet, DualInputNet, InitialReconNet, NetConfig,
                    PixelLstm, PredictorNet)
from .train import (TrainReport, evaluate, load_weights, nmse_complex,
                    save_weights, train_future, train_present)

__all__ = [name for name in dir() if not name.startswith("_")]
