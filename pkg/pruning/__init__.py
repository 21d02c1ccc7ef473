from pruning.mask import (
    PruneMask,
    PruneSchedule,
    apply_mask,
    magnitude_prune,
    mask_gradients,
    model_sparsity,
    pack_mask,
    sparsity,
    surviving_values,
    unpack_mask,
)
