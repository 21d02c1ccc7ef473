from autodiff.tensor import (
    Tape,
    Tensor,
    backward,
    default_dtype,
    grad_enabled,
    no_grad,
    precision,
    set_default_precision,
)
from autodiff.ops import (
    add,
    broadcast_to,
    concat,
    cross_entropy,
    gelu,
    layer_norm,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    softmax,
    sub,
    sum,
    swapaxes,
    take,
)
from autodiff.gradcheck import check_gradients
