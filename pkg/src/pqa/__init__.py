"""Product-quantization inference engine and analytical accelerator
performance model.

``core`` holds the shared geometry types, ``encoder`` the unrolling,
prototype fitting and table construction, ``inference`` the lookup and
reference forward paths, ``quantizer`` the low-bitwidth contract,
``perfmodel`` the cycle/FLOPs/footprint model, and ``cli`` the command
line front end.
"""

from .core import (
    LayerKind,
    LayerSpec,
    Metric,
    NumericError,
    PQConfig,
    ShapeError,
    SubspaceLayout,
    UnrolledDims,
    derive_unrolled_dims,
    subspace_layout,
)
from .encoder import (
    Corrector,
    EncodingResult,
    LutPQ,
    PrototypeBank,
    apply_corrector,
    build_lut,
    compute_distances,
    encode_hard,
    encode_soft,
    fit_corrector,
    fit_prototypes,
    refit_lut,
    unroll_im2col,
    unroll_weights,
)
from .inference import (
    ErrorReport,
    NetworkLayer,
    PQLayerRuntime,
    error_report,
    network_forward,
    pq_forward,
    reference_forward,
)
from .perfmodel import (
    HwConfig,
    LayerCycleReport,
    FootprintReport,
    SweepGrid,
    SweepRecord,
    area_ealm,
    compute_cycles,
    flops_footprint,
    flops_ratio_closed_form,
    latency_us,
    layer_report,
    load_cycles,
    memory_footprint,
    network_report,
    sweep,
)
from .quantizer import (
    Calibration,
    Granularity,
    QuantParams,
    QuantScheme,
    QuantizedRuntime,
    calibrate,
    dequantize,
    quantize,
    quantize_runtime,
    quantized_pq_forward,
)

__version__ = "0.1.0"
