"""Small numpy autoencoder engine: conv/pool/BiLSTM encoder, dense/upsample/deconv decoder."""

from .layers import BiLSTM, Conv1D, Crop1D, Deconv1D, Dense, Layer, MaxPool1D, UpSample1D
from .network import (Network, build_autoencoder, grad_check, load_network, reconstruction_loss,
                      save_network)
from .train import Adam, ClusterState, TrainConfig, TrainingDivergence, TrainTrace, train

__all__ = [
    "Adam", "BiLSTM", "ClusterState", "Conv1D", "Crop1D", "Deconv1D", "Dense", "Layer", "MaxPool1D",
    "Network", "TrainConfig", "TrainTrace", "TrainingDivergence", "UpSample1D", "build_autoencoder",
    "grad_check", "load_network", "reconstruction_loss", "save_network", "train",
]
