from graphextract.nn.layers import GatLayer, GinLayer, SageLayer, DenseLayer, layer_forward
from graphextract.nn.matrixform import MatrixFormSpec, matrix_form_forward
from graphextract.nn.models import (
    ModelConfig,
    TrainedModel,
    build_model,
    surrogate_encoder_config,
    target_config,
)
from graphextract.nn.train import Adam, TrainConfig, train_model
from graphextract.nn.checkpoint import load_model, save_model
