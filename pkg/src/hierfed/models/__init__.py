"""Student models: knowledge tracing (LSTM) and outcome prediction (GRU)."""

from .encoding import (
    FORUM_ACTIONS,
    ActivitySeq,
    ForumStep,
    InteractionSeq,
    ModelSpec,
    VideoStep,
    Vocab,
    encode_activity,
    encode_interaction,
    encode_kt_student,
    encode_op_student,
    pad_batch,
)
from .kt import kt_forward, kt_init, kt_loss, kt_loss_grad, kt_predict
from .op import (
    extract_embedding,
    op_forward,
    op_init,
    op_loss,
    op_loss_grad,
    op_predict,
)

__all__ = [
    "FORUM_ACTIONS",
    "ActivitySeq",
    "ForumStep",
    "InteractionSeq",
    "ModelSpec",
    "VideoStep",
    "Vocab",
    "encode_activity",
    "encode_interaction",
    "encode_kt_student",
    "encode_op_student",
    "extract_embedding",
    "kt_forward",
    "kt_init",
    "kt_loss",
    "kt_loss_grad",
    "kt_predict",
    "op_forward",
    "op_init",
    "op_loss",
    "op_loss_grad",
    "op_predict",
    "pad_batch",
]
