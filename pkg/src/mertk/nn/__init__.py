"""Small numpy neural-network stack: layers, softmax/CCE, LSTM, Adam and training."""

from .layers import (
    LSTM, Conv1D, Dense, Flatten, MaxPool1D, ReLU, Reshape, Sequential, build_cnn, build_mlp, build_rnn,
)
from .ops import (
    cce_loss, conv1d_backward, conv1d_forward, dense_backward, dense_forward, lstm_backward, lstm_forward,
    maxpool1d_backward, maxpool1d_forward, relu, relu_backward, softmax, softmax_cce,
)
from .optim import AdamState, adam_step
from .train import TrainSchedule, evaluate, fit
