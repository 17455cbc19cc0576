from arsent.nn.functional import (
    bilstm_forward,
    conv1d_forward,
    dense_forward,
    dropout,
    embedding_forward,
    gaussian_noise,
    global_max_pool,
)
from arsent.nn.layers import BiLSTM, Conv1D, Dense, Dropout, Embedding, GaussianNoise, GlobalMaxPool
from arsent.nn.network import Network, read_checkpoint, save_checkpoint
from arsent.nn.rng import SeededRng

__all__ = [
    "BiLSTM", "Conv1D", "Dense", "Dropout", "Embedding", "GaussianNoise", "GlobalMaxPool",
    "Network", "SeededRng", "bilstm_forward", "conv1d_forward", "dense_forward", "dropout",
    "embedding_forward", "gaussian_noise", "global_max_pool", "read_checkpoint", "save_checkpoint",
]
