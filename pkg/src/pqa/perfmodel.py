"""Analytical performance model of the lookup accelerator.

Per layer, compute cycles come from the vectorized distance/lookup
datapath and load cycles from streaming the prototype and dot-product
tables; each layer costs max(compute, load) because loading overlaps the
previous layer's compute (double buffering). The module also accounts
FLOPs, parameter footprints, chip area in equivalent ALMs, and runs the
full parameter-sweep grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import Metric, PQConfig, SubspaceLayout, UnrolledDims, subspace_layout
from .modelspec import Model, ModelLayer, dense_params, layer_unrolled

# external memory bandwidths, bytes/s (GB = 1e9 bytes)
DDR4_BW = 36e9
HBM_BW = 460e9
MEMORY_KINDS = {"ddr4": DDR4_BW, "hbm": HBM_BW}

DSP_EALMS = 30
BRAM_EALMS = 40


@dataclass(frozen=True)
class HwConfig:
    """Datapath vectorization, buffer maxima, clock, memory bandwidth,
    and component bitwidths."""

    ls_vec: int = 16
    np_vec: int = 16
    ns_vec: int = 16
    nout_vec: int = 16
    ls_max: int | None = None
    np_max: int | None = None
    ns_max: int | None = None
    nout_max: int | None = None
    nin_max: int | None = None
    fmax_hz: float = 490e6
    mem_bw_bytes_per_s: float = DDR4_BW
    proto_bits: int = 16
    lut_bits: int = 16

    def __post_init__(self) -> None:
        for name in ("ls_vec", "np_vec", "ns_vec", "nout_vec"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for vec, mx in (("ls_vec", "ls_max"), ("np_vec", "np_max"),
                        ("ns_vec", "ns_max"), ("nout_vec", "nout_max")):
            cap = getattr(self, mx)
            if cap is not None and getattr(self, vec) > cap:
                raise ValueError(f"{vec} exceeds {mx}")
        if not self.fmax_hz > 0:
            raise ValueError("fmax_hz must be > 0")
        if not self.mem_bw_bytes_per_s > 0:
            raise ValueError("memory bandwidth must be > 0")
        for b in (self.proto_bits, self.lut_bits):
            if not 1 <= b <= 32:
                raise ValueError("component bits must be in [1, 32]")


@dataclass(frozen=True)
class LayerCycleReport:
    compute_cycles: int
    load_cycles: int
    total_cycles: int
    memory_bound: bool
    bits_loaded: int

    def __post_init__(self) -> None:
        if self.total_cycles != max(self.compute_cycles, self.load_cycles):
            raise ValueError("total must be max(compute, load)")
        if self.memory_bound != (self.load_cycles > self.compute_cycles):
            raise ValueError("memory_bound flag inconsistent")


@dataclass(frozen=True)
class FootprintReport:
    flops_im2col: int
    flops_pq: int
    flops_enc: int
    flops_add: int
    ratio: float
    lut_entries: int
    proto_entries: int
    params_pq: int

    def __post_init__(self) -> None:
        if self.flops_pq != self.flops_enc + self.flops_add:
            raise ValueError("flops_pq must equal flops_enc + flops_add")


def compute_cycles(dims: UnrolledDims, layout: SubspaceLayout, pq: PQConfig,
                   hw: HwConfig) -> int:
    """Datapath cycles: per column and subspace group, the slower of the
    distance stage and the lookup stage."""
    distance = math.ceil(pq.n_p / hw.np_vec) * math.ceil(pq.l_s / hw.ls_vec)
    lookup = math.ceil(dims.c_out / hw.nout_vec)
    return max(distance, lookup) * math.ceil(layout.n_s / hw.ns_vec) * dims.cols


def table_bits(dims: UnrolledDims, layout: SubspaceLayout, pq: PQConfig,
               hw: HwConfig) -> int:
    """Bits of the prototype bank plus the dot-product table for one layer."""
    protos = layout.n_s * pq.n_p * pq.l_s * hw.proto_bits
    lut = layout.n_s * pq.n_p * dims.c_out * hw.lut_bits
    return protos + lut


def load_cycles(dims: UnrolledDims, layout: SubspaceLayout, pq: PQConfig,
                hw: HwConfig) -> int:
    """Cycles to stream the layer tables: the slower of the internal
    banked-memory fill and the external bus transfer."""
    internal = math.ceil(dims.c_out * pq.n_p * layout.n_s
                         / (hw.nout_vec * hw.ns_vec))
    bits = table_bits(dims, layout, pq, hw)
    bits_per_cycle = hw.mem_bw_bytes_per_s * 8.0 / hw.fmax_hz
    external = math.ceil(bits / bits_per_cycle)
    return max(internal, external)


def layer_report(dims: UnrolledDims, layout: SubspaceLayout, pq: PQConfig,
                 hw: HwConfig) -> LayerCycleReport:
    cc = compute_cycles(dims, layout, pq, hw)
    lc = load_cycles(dims, layout, pq, hw)
    return LayerCycleReport(compute_cycles=cc, load_cycles=lc,
                            total_cycles=max(cc, lc),
                            memory_bound=lc > cc,
                            bits_loaded=table_bits(dims, layout, pq, hw))


def latency_us(total_cycles: int, fmax_hz: float) -> float:
    return total_cycles / fmax_hz * 1e6


def dist_flops_per_proto_elem(metric: Metric) -> int:
    """FLOPs per (prototype, element) pair: subtract+multiply+add for the
    squared metric, subtract+abs-add for the absolute one."""
    return 3 if Metric(metric) is Metric.L2_SQUARED else 2


def flops_footprint(dims: UnrolledDims, layout: SubspaceLayout,
                    pq: PQConfig) -> FootprintReport:
    """FLOPs of the dense im2col product vs. the PQ replacement (distance
    encoding plus partial-sum additions), and the table footprints."""
    flops_im2col = 2 * dims.a * dims.cols * dims.c_out
    d_flops = dist_flops_per_proto_elem(pq.metric) * pq.n_p * pq.l_s
    flops_enc = layout.n_s * d_flops * dims.cols
    flops_add = (layout.n_s - 1) * dims.cols * dims.c_out
    flops_pq = flops_enc + flops_add
    lut_entries = layout.n_s * pq.n_p * dims.c_out
    proto_entries = layout.n_s * pq.n_p * pq.l_s
    return FootprintReport(
        flops_im2col=flops_im2col, flops_pq=flops_pq, flops_enc=flops_enc,
        flops_add=flops_add, ratio=flops_im2col / flops_pq,
        lut_entries=lut_entries, proto_entries=proto_entries,
        params_pq=lut_entries + proto_entries)


def flops_ratio_closed_form(c_out: int, n_p: int, l_s: int,
                            n_s: int | None = None,
                            metric: Metric = Metric.L2_SQUARED) -> float:
    """Closed-form FLOPs savings ratio.

    Without ``n_s`` this is the simplified form 2*c_out*l_s /
    (d*n_p*l_s + c_out) that replaces (n_s - 1) partial-sum adds by n_s;
    with ``n_s`` the (n_s - 1) term is kept and the result matches the
    component-wise ratio exactly whenever a == n_s*l_s.
    """
    d = dist_flops_per_proto_elem(metric)
    if n_s is None:
        return 2.0 * c_out * l_s / (d * n_p * l_s + c_out)
    return (2.0 * n_s * l_s * c_out
            / (d * n_s * n_p * l_s + (n_s - 1) * c_out))


# ---------------------------------------------------------------------------
# Model-level accounting
# ---------------------------------------------------------------------------

LUT_PLUS_DENSE = "lut_plus_dense"
LUT_PLUS_PROTOS_PLUS_DENSE = "lut_plus_protos_plus_dense"


def _layer_pq(ml: ModelLayer, l_s: int | None, n_p: int | None) -> PQConfig:
    return ml.pq_config(default_l_s=l_s, default_n_p=n_p)


def memory_footprint(model: Model, l_s: int | None = None,
                     n_p: int | None = None,
                     convention: str = LUT_PLUS_DENSE) -> int:
    """Deployed parameter count: PQ layers contribute their table entries
    (plus prototypes under the wider convention), dense layers their
    weight and bias counts."""
    if convention not in (LUT_PLUS_DENSE, LUT_PLUS_PROTOS_PLUS_DENSE):
        raise ValueError(f"unknown convention {convention!r}")
    total = 0
    for ml in model.layers:
        if ml.spec.pq_enabled:
            dims = layer_unrolled(ml)
            pq = _layer_pq(ml, l_s, n_p)
            layout = subspace_layout(dims.a, pq.l_s)
            total += layout.n_s * pq.n_p * dims.c_out
            if convention == LUT_PLUS_PROTOS_PLUS_DENSE:
                total += layout.n_s * pq.n_p * pq.l_s
            if ml.bias:
                total += dims.c_out  # bias survives the table replacement
        else:
            total += dense_params(ml)
    return total


@dataclass(frozen=True)
class NetworkCycleReport:
    per_layer: tuple[tuple[str, LayerCycleReport], ...]
    total_cycles: int
    latency_us: float

    @property
    def any_memory_bound(self) -> bool:
        return any(rep.memory_bound for _, rep in self.per_layer)


def network_report(model: Model, hw: HwConfig, l_s: int | None = None,
                   n_p: int | None = None) -> NetworkCycleReport:
    """Cycle totals over the PQ layers of a model; non-PQ layers do not
    execute on the accelerator and contribute zero cycles."""
    rows = []
    total = 0
    for ml in model.pq_layers:
        dims = layer_unrolled(ml)
        pq = _layer_pq(ml, l_s, n_p)
        layout = subspace_layout(dims.a, pq.l_s)
        rep = layer_report(dims, layout, pq, hw)
        rows.append((ml.spec.name, rep))
        total += rep.total_cycles
    return NetworkCycleReport(per_layer=tuple(rows), total_cycles=total,
                              latency_us=latency_us(total, hw.fmax_hz))


def area_ealm(alms: int, dsps: int, brams: int) -> int:
    """Area in equivalent ALMs: one DSP counts as 30, one BRAM as 40."""
    if min(alms, dsps, brams) < 0:
        raise ValueError("resource counts must be non-negative")
    return alms + DSP_EALMS * dsps + BRAM_EALMS * brams


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepGrid:
    """Grid of square conv layers (c_in == c_out) swept over input size,
    channels, PQ parameters, and memory kind."""

    input_sizes: tuple[int, ...]
    channels: tuple[int, ...]
    n_p_values: tuple[int, ...]
    l_s_values: tuple[int, ...]
    memory_kinds: tuple[str, ...] = ("ddr4", "hbm")
    kernel: int = 3
    stride: int = 1

    def __post_init__(self) -> None:
        for name in ("input_sizes", "channels", "n_p_values", "l_s_values",
                     "memory_kinds"):
            seq = tuple(getattr(self, name))
            object.__setattr__(self, name, seq)
            if len(seq) == 0:
                raise ValueError(f"sweep grid has an empty {name}")
        for kind in self.memory_kinds:
            if kind not in MEMORY_KINDS:
                raise ValueError(f"unknown memory kind {kind!r}")


@dataclass(frozen=True)
class SweepRecord:
    input_size: int
    channels: int
    kernel: int
    n_p: int
    l_s: int
    memory: str
    cols: int
    n_s: int
    cycles: LayerCycleReport
    footprint: FootprintReport
    speedup: float | None = None


def sweep(grid: SweepGrid, hw: HwConfig,
          baseline_cycles: dict[tuple[int, int], int] | None = None,
          ) -> list[SweepRecord]:
    """Evaluate every grid point in lexicographic order.

    ``baseline_cycles`` maps (input_size, channels) to reference cycle
    counts (for example a conventional accelerator's); when present each
    record carries speedup = baseline / total.
    """
    records: list[SweepRecord] = []
    for memory in grid.memory_kinds:
        hw_mem = replace(hw, mem_bw_bytes_per_s=MEMORY_KINDS[memory])
        for size in grid.input_sizes:
            for ch in grid.channels:
                a = grid.kernel * grid.kernel * ch
                cols = math.ceil(size / grid.stride) ** 2
                dims = UnrolledDims(a=a, cols=cols, c_out=ch)
                for n_p in grid.n_p_values:
                    for l_s in grid.l_s_values:
                        pq = PQConfig(n_p=n_p, l_s=l_s)
                        layout = subspace_layout(a, l_s)
                        rep = layer_report(dims, layout, pq, hw_mem)
                        fp = flops_footprint(dims, layout, pq)
                        speed = None
                        if baseline_cycles is not None:
                            base = baseline_cycles.get((size, ch))
                            if base is not None:
                                speed = base / rep.total_cycles
                        records.append(SweepRecord(
                            input_size=size, channels=ch, kernel=grid.kernel,
                            n_p=n_p, l_s=l_s, memory=memory, cols=cols,
                            n_s=layout.n_s, cycles=rep, footprint=fp,
                            speedup=speed))
    return records
