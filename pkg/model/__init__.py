from model.vit import (
    ViTConfig,
    ViTParams,
    attention,
    encoder_block,
    init_params,
    is_prunable,
    parameter_count,
    parameter_shapes,
    patchify,
    patchify_batch,
    prunable_names,
    vit_forward,
)
