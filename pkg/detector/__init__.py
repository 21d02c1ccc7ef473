from detector.sdd import (
    Curve,
    CurvePoint,
    PhaseSegmentation,
    SDDState,
    SDDVerdict,
    bump_magnitude,
    collapse_sparsity,
    detect_sdd_curve,
    segment_phases,
    smooth,
    step,
)
