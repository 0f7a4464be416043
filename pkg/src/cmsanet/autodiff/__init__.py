from cmsanet.autodiff.tensor import (
    Tensor,
    add,
    as_tensor,
    broadcast_to,
    concat,
    conv2d,
    hadamard,
    l2_normalize,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scalar_mul,
    sigmoid,
    softmax,
    sub,
    sum,
    take_rows,
    tanh,
    topological_order,
    transpose,
)
from cmsanet.autodiff.optim import AdamState, adam_step, poly_lr
from cmsanet.autodiff.checkpoint import load_checkpoint, save_checkpoint
from cmsanet.autodiff.gradcheck import check_gradients, numerical_grad, rel_error

__all__ = [
    "Tensor", "add", "as_tensor", "broadcast_to", "concat", "conv2d", "hadamard",
    "l2_normalize", "log", "matmul", "mean", "mul", "no_grad", "relu", "reshape",
    "scalar_mul", "sigmoid", "softmax", "sub", "sum", "take_rows", "tanh",
    "topological_order", "transpose", "AdamState", "adam_step", "poly_lr",
    "load_checkpoint", "save_checkpoint", "check_gradients", "numerical_grad", "rel_error",
]
