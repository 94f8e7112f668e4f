"""Python bindings for the spml-lab core."""

from ._core import (
    ConfigError,
    FormatError,
    aggregate_local,
    average_precision,
    decode_score_map,
    encode_score_map,
    gpr_loss_batch,
    gr_loss_batch,
    load_score_map,
    loss_confirmed_positive,
    loss_negative_pseudo,
    loss_positive_pseudo,
    loss_undefined,
    mean_average_precision,
    save_score_map,
    sigmoid,
    simulate,
    temperature_softmax,
    train,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "aggregate_local",
    "average_precision",
    "decode_score_map",
    "encode_score_map",
    "gpr_loss_batch",
    "gr_loss_batch",
    "load_score_map",
    "loss_confirmed_positive",
    "loss_negative_pseudo",
    "loss_positive_pseudo",
    "loss_undefined",
    "mean_average_precision",
    "save_score_map",
    "sigmoid",
    "simulate",
    "temperature_softmax",
    "train",
]
