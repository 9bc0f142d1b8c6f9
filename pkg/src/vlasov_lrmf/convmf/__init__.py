from .layers import Activation, Conv2D, Linear, ShapeError, conv2d_backward, conv2d_forward
from .model import ConvMFModel, ConvSpec, Hyperparameters, SEARCH_GRID, build_convmf
from .optim import SGD, Adagrad, Adam, NonFiniteGradient, adam_step, make_optimizer
from .train import TrainingDiverged, TrainReport, train
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
