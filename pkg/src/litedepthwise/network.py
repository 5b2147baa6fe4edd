"""The classification network as a data-driven layer graph.

The topology: a spectral stem convolution, two branches fed from it (a
grouped 1x1x1 expansion followed by depthwise/pointwise pairs; one branch
carries an extra pair), a channel concatenation that also re-injects the
stem output, a spectral-collapsing depthwise + pointwise head, global
average pooling and a fully connected classifier. Normalization and ReLU
follow only the ordinary and pointwise convolutions; nothing sits between
a depthwise stage and its pointwise successor.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import ops, precision
from . import tensor as tensor_ops
from .ops import BatchNormSpec, Conv3dSpec
from .tensor import ShapeError, Tensor, as_ndarray

CHECKPOINT_MAGIC = b"LDWN"
CHECKPOINT_VERSION = 1

STEM_KERNEL_DEPTH = 7
STEM_SPECTRAL_STRIDE = 2


@dataclass(frozen=True)
class NetworkConfig:
    """Size knobs for one network instance."""

    patch: int = 9
    bands: int = 200
    num_classes: int = 16
    stem_channels: int = 24
    branch_channels: int = 12
    head_channels: int = 60
    groups: int = 3
    # Which branch carries the extra depthwise+pointwise pair (1 or 2).
    extra_depthwise_branch: int = 2

    def __post_init__(self):
        if self.patch < 1 or self.patch % 2 == 0:
            raise ShapeError(f"patch must be odd and positive, got {self.patch}")
        if self.bands < 9:
            raise ShapeError(
                f"bands must be >= 9 so the stride-2 spectral stem keeps depth >= 1 "
                f"(got {self.bands})"
            )
        if self.num_classes < 1:
            raise ShapeError("num_classes must be positive")
        if self.stem_channels % self.groups:
            raise ShapeError(
                f"stem_channels={self.stem_channels} must divide by groups={self.groups}"
            )
        if self.extra_depthwise_branch not in (1, 2):
            raise ShapeError("extra_depthwise_branch must be 1 or 2")

    @property
    def stem_depth(self):
        return (self.bands - STEM_KERNEL_DEPTH) // STEM_SPECTRAL_STRIDE + 1

    @property
    def merge_channels(self):
        """Width of the dense concatenation (stem bypass + both branches)."""
        return self.stem_channels + 2 * self.branch_channels


@dataclass
class LayerSpec:
    """One node of the computation DAG."""

    name: str
    kind: str  # conv3d | groupConv3d | depthwise3d | pointwise3d | batchnorm | relu | concat | globalAvgPool | fullyConnected
    inputs: list
    conv: Conv3dSpec = None
    bn: BatchNormSpec = None
    fc: tuple = None  # (in_features, out_features)

    @property
    def is_conv(self):
        return self.kind in ("conv3d", "groupConv3d", "depthwise3d", "pointwise3d")


class NetworkGraph:
    """An ordered DAG of LayerSpecs; list order is a topological order."""

    INPUT = "input"

    def __init__(self, nodes):
        self.nodes = list(nodes)
        self.by_name = {}
        seen = {self.INPUT}
        for node in self.nodes:
            if node.name in self.by_name or node.name == self.INPUT:
                raise ShapeError(f"duplicate layer name {node.name!r}")
            for ref in node.inputs:
                if ref not in seen:
                    raise ShapeError(
                        f"layer {node.name!r} references {ref!r} before definition"
                    )
            self.by_name[node.name] = node
            seen.add(node.name)
        if not self.nodes:
            raise ShapeError("graph needs at least one layer")

    @property
    def output_name(self):
        return self.nodes[-1].name

    def consumers(self):
        out = {name: [] for name in [self.INPUT] + [n.name for n in self.nodes]}
        for node in self.nodes:
            for ref in node.inputs:
                out[ref].append(node.name)
        return out


def _branch(cfg, tag, source, extra_pair):
    """Grouped expansion + depthwise/pointwise chain for one branch."""
    merge = cfg.merge_channels
    bc = cfg.branch_channels
    nodes = [
        LayerSpec(
            f"{tag}_group", "groupConv3d", [source],
            conv=Conv3dSpec((1, 1, 1), cfg.stem_channels, merge,
                            groups=cfg.groups, has_bias=False),
        ),
        LayerSpec(f"{tag}_group_bn", "batchnorm", [f"{tag}_group"],
                  bn=BatchNormSpec(merge)),
        LayerSpec(f"{tag}_group_relu", "relu", [f"{tag}_group_bn"]),
        LayerSpec(
            f"{tag}_dw", "depthwise3d", [f"{tag}_group_relu"],
            conv=Conv3dSpec((3, 3, 3), merge, merge, groups=merge,
                            padding=(1, 1, 1)),
        ),
        LayerSpec(
            f"{tag}_pw", "pointwise3d", [f"{tag}_dw"],
            conv=Conv3dSpec((1, 1, 1), merge, bc),
        ),
        LayerSpec(f"{tag}_pw_bn", "batchnorm", [f"{tag}_pw"], bn=BatchNormSpec(bc)),
        LayerSpec(f"{tag}_pw_relu", "relu", [f"{tag}_pw_bn"]),
    ]
    if extra_pair:
        nodes += [
            LayerSpec(
                f"{tag}_dw2", "depthwise3d", [f"{tag}_pw_relu"],
                conv=Conv3dSpec((3, 3, 3), bc, bc, groups=bc, padding=(1, 1, 1)),
            ),
            LayerSpec(
                f"{tag}_pw2", "pointwise3d", [f"{tag}_dw2"],
                conv=Conv3dSpec((1, 1, 1), bc, bc),
            ),
            LayerSpec(f"{tag}_pw2_bn", "batchnorm", [f"{tag}_pw2"], bn=BatchNormSpec(bc)),
            LayerSpec(f"{tag}_pw2_relu", "relu", [f"{tag}_pw2_bn"]),
        ]
    return nodes


def build_network(cfg):
    """Assemble the full layer graph for a NetworkConfig."""
    merge = cfg.merge_channels
    nodes = [
        LayerSpec(
            "stem", "conv3d", [NetworkGraph.INPUT],
            conv=Conv3dSpec((1, 1, STEM_KERNEL_DEPTH), 1, cfg.stem_channels,
                            stride=(1, 1, STEM_SPECTRAL_STRIDE)),
        ),
        LayerSpec("stem_bn", "batchnorm", ["stem"], bn=BatchNormSpec(cfg.stem_channels)),
        LayerSpec("stem_relu", "relu", ["stem_bn"]),
    ]
    nodes += _branch(cfg, "b1", "stem_relu", extra_pair=cfg.extra_depthwise_branch == 1)
    nodes += _branch(cfg, "b2", "stem_relu", extra_pair=cfg.extra_depthwise_branch == 2)
    b1_out = "b1_pw2_relu" if cfg.extra_depthwise_branch == 1 else "b1_pw_relu"
    b2_out = "b2_pw2_relu" if cfg.extra_depthwise_branch == 2 else "b2_pw_relu"
    nodes += [
        LayerSpec("merge", "concat", ["stem_relu", b1_out, b2_out]),
        LayerSpec(
            "head_dw", "depthwise3d", ["merge"],
            conv=Conv3dSpec((3, 3, cfg.stem_depth), merge, merge, groups=merge,
                            padding=(1, 1, 0)),
        ),
        LayerSpec(
            "head_pw", "pointwise3d", ["head_dw"],
            conv=Conv3dSpec((1, 1, 1), merge, cfg.head_channels),
        ),
        LayerSpec("head_bn", "batchnorm", ["head_pw"], bn=BatchNormSpec(cfg.head_channels)),
        LayerSpec("head_relu", "relu", ["head_bn"]),
        LayerSpec("pool", "globalAvgPool", ["head_relu"]),
        LayerSpec("fc", "fullyConnected", ["pool"],
                  fc=(cfg.head_channels, cfg.num_classes)),
    ]
    return NetworkGraph(nodes)


def infer_shapes(graph, input_shape):
    """Propagate (n, c, h, w, d) extents through the graph without data."""
    shapes = {NetworkGraph.INPUT: tuple(input_shape)}
    for node in graph.nodes:
        ins = [shapes[ref] for ref in node.inputs]
        if node.is_conv:
            n, c, h, w, d = ins[0]
            if c != node.conv.in_channels:
                raise ShapeError(
                    f"layer {node.name!r}: input has {c} channels, "
                    f"spec expects {node.conv.in_channels}"
                )
            shapes[node.name] = (n, node.conv.out_channels) + node.conv.out_extents((h, w, d))
        elif node.kind in ("batchnorm", "relu"):
            shapes[node.name] = ins[0]
        elif node.kind == "concat":
            first = ins[0]
            for s in ins[1:]:
                if s[0] != first[0] or s[2:] != first[2:]:
                    raise ShapeError(f"layer {node.name!r}: concat extent mismatch")
            shapes[node.name] = (first[0], sum(s[1] for s in ins)) + first[2:]
        elif node.kind == "globalAvgPool":
            shapes[node.name] = ins[0][:2]
        elif node.kind == "fullyConnected":
            if ins[0][-1] != node.fc[0]:
                raise ShapeError(
                    f"layer {node.name!r}: input width {ins[0][-1]} != {node.fc[0]}"
                )
            shapes[node.name] = (ins[0][0], node.fc[1])
        else:
            raise ShapeError(f"unknown layer kind {node.kind!r}")
    return shapes


def check_no_mid_block_activation(graph):
    """No BN or ReLU may follow a depthwise conv before its pointwise."""
    consumers = graph.consumers()
    for node in graph.nodes:
        if node.kind != "depthwise3d":
            continue
        for consumer in consumers[node.name]:
            kind = graph.by_name[consumer].kind
            if kind in ("batchnorm", "relu"):
                raise ShapeError(
                    f"depthwise layer {node.name!r} feeds {kind} {consumer!r}; "
                    "the block must go straight into its pointwise stage"
                )


class ParameterStore:
    """Named map layer -> parameter arrays, plus the seed that built it."""

    def __init__(self, params, seed=None):
        self.params = params
        self.seed = seed

    def __getitem__(self, name):
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def copy(self):
        return ParameterStore(
            {k: {n: v.copy() for n, v in entry.items()} for k, entry in self.params.items()},
            seed=self.seed,
        )

    def named_arrays(self, graph):
        """Flat (name, array) pairs in graph order, stable across runs."""
        out = []
        for node in graph.nodes:
            if node.name not in self.params:
                continue
            entry = self.params[node.name]
            for key in ("weight", "bias", "scale", "shift", "running_mean", "running_var"):
                if key in entry:
                    out.append((f"{node.name}.{key}", entry[key]))
        return out


def _uniform_fan_in(rng, shape, fan_in, dt):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dt)


def init_parameters(graph, seed):
    """Fan-in-scaled uniform init for weights; zeros/ones elsewhere.

    Deterministic for a fixed seed: nodes are visited in graph order and
    draws consume the stream in a fixed sequence.
    """
    rng = np.random.default_rng(seed)
    dt = precision.dtype()
    params = {}
    for node in graph.nodes:
        if node.is_conv:
            spec = node.conv
            kh, kw, kd = spec.kernel
            fan_in = (spec.in_channels // spec.groups) * kh * kw * kd
            entry = {"weight": _uniform_fan_in(rng, spec.weight_shape, fan_in, dt)}
            if spec.has_bias:
                entry["bias"] = np.zeros(spec.out_channels, dtype=dt)
            params[node.name] = entry
        elif node.kind == "batchnorm":
            params[node.name] = ops.init_batchnorm_state(node.bn)
        elif node.kind == "fullyConnected":
            fin, fout = node.fc
            params[node.name] = {
                "weight": _uniform_fan_in(rng, (fin, fout), fin, dt),
                "bias": np.zeros(fout, dtype=dt),
            }
    return ParameterStore(params, seed=seed)


def forward(graph, params, batch, mode="infer", return_tape=False):
    """Run the graph; returns logits, optionally with the backward tape.

    Shape problems are reported with the offending layer's name.
    """
    values = {NetworkGraph.INPUT: Tensor(as_ndarray(batch))}
    caches = {}
    for node in graph.nodes:
        ins = [values[ref] for ref in node.inputs]
        try:
            if node.is_conv:
                entry = params[node.name]
                values[node.name] = ops.conv3d_forward(
                    ins[0], entry["weight"], entry.get("bias"), node.conv
                )
            elif node.kind == "batchnorm":
                out, cache = ops.batchnorm_forward(ins[0], params[node.name], node.bn, mode)
                values[node.name] = out
                caches[node.name] = cache
            elif node.kind == "relu":
                out, mask = ops.relu_forward(ins[0])
                values[node.name] = out
                caches[node.name] = mask
            elif node.kind == "concat":
                values[node.name] = tensor_ops.concat_channels(ins)
            elif node.kind == "globalAvgPool":
                out, in_shape = ops.global_avg_pool_forward(ins[0])
                values[node.name] = out
                caches[node.name] = in_shape
            elif node.kind == "fullyConnected":
                entry = params[node.name]
                values[node.name] = ops.fully_connected_forward(
                    ins[0], entry["weight"], entry["bias"]
                )
        except ShapeError as err:
            raise ShapeError(f"layer {node.name!r}: {err}") from err
    logits = values[graph.output_name]
    if return_tape:
        return logits, {"values": values, "caches": caches, "mode": mode}
    return logits


def backward_from_tape(graph, params, tape, grad_logits):
    """Reverse traversal of the DAG; returns gradients per parameter name."""
    values, caches = tape["values"], tape["caches"]
    grad_at = {graph.output_name: as_ndarray(grad_logits).copy()}
    param_grads = {}

    def push(name, g):
        if name in grad_at:
            grad_at[name] = grad_at[name] + g
        else:
            grad_at[name] = np.array(g, copy=True)

    for node in reversed(graph.nodes):
        g = grad_at.pop(node.name, None)
        if g is None:
            continue
        if node.is_conv:
            entry = params[node.name]
            gx, gw, gb = ops.conv3d_backward(g, values[node.inputs[0]], entry["weight"], node.conv)
            pgrads = {"weight": as_ndarray(gw)}
            if gb is not None:
                pgrads["bias"] = as_ndarray(gb)
            param_grads[node.name] = pgrads
            push(node.inputs[0], as_ndarray(gx))
        elif node.kind == "batchnorm":
            gx, gscale, gshift = ops.batchnorm_backward(g, caches[node.name], params[node.name])
            param_grads[node.name] = {"scale": as_ndarray(gscale), "shift": as_ndarray(gshift)}
            push(node.inputs[0], as_ndarray(gx))
        elif node.kind == "relu":
            push(node.inputs[0], as_ndarray(ops.relu_backward(g, caches[node.name])))
        elif node.kind == "concat":
            offset = 0
            for ref in node.inputs:
                width = values[ref].shape[1]
                push(ref, np.ascontiguousarray(g[:, offset : offset + width]))
                offset += width
        elif node.kind == "globalAvgPool":
            push(node.inputs[0], as_ndarray(ops.global_avg_pool_backward(g, caches[node.name])))
        elif node.kind == "fullyConnected":
            entry = params[node.name]
            gx, gw, gb = ops.fully_connected_backward(g, values[node.inputs[0]], entry["weight"])
            param_grads[node.name] = {"weight": as_ndarray(gw), "bias": as_ndarray(gb)}
            push(node.inputs[0], as_ndarray(gx))
    return param_grads


def backward(graph, params, batch, grad_logits, mode="train"):
    """Forward-then-reverse convenience wrapper returning parameter grads."""
    _, tape = forward(graph, params, batch, mode=mode, return_tape=True)
    return backward_from_tape(graph, params, tape, grad_logits)


def save_checkpoint(path, store, graph):
    """Write parameters in the binary checkpoint format.

    Layout: magic "LDWN", u32 version, then per named array: u32 name
    length, UTF-8 name, u32 rank, u32 extents, little-endian float32
    payload. Payloads are stored in float32 regardless of engine precision.
    """
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        for name, arr in store.named_arrays(graph):
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, graph):
    """Read a checkpoint and validate every array against the graph."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 8
    arrays = {}
    while offset < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        extents = struct.unpack_from(f"<{rank}I", blob, offset)
        offset += 4 * rank
        count = int(np.prod(extents)) if rank else 1
        payload = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        arrays[name] = payload.reshape(extents)

    fresh = init_parameters(graph, seed=0)
    dt = precision.dtype()
    for name, ref in fresh.named_arrays(graph):
        if name not in arrays:
            raise ValueError(f"{path}: checkpoint is missing array {name!r}")
        if arrays[name].shape != ref.shape:
            raise ValueError(
                f"{path}: array {name!r} has shape {arrays[name].shape}, "
                f"graph expects {ref.shape}"
            )
    for name in arrays:
        layer, _, key = name.rpartition(".")
        if layer not in fresh.params or key not in fresh.params[layer]:
            raise ValueError(f"{path}: unexpected array {name!r} for this graph")
        fresh.params[layer][key] = arrays[name].astype(dt)
    fresh.seed = None
    return fresh
