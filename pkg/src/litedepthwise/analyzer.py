"""Static cost model: exact parameter and FLOP counts per layer.

Counting convention (frozen after calibrating against the published cost
tables for the 200-, 103- and 102-band configurations, which it reproduces
exactly):

  conv parameters  kh*kw*kd * (in/groups) * out, plus out if biased
  batchnorm        2 per channel (learned scale/shift; running stats are
                   buffers, not parameters)
  fully connected  in*out + out

  conv FLOPs       output elements * ((in/groups) * kh*kw*kd + 1 if biased)
                   (multiply-accumulate counted as one, bias add as one)
  batchnorm        2 per element
  ReLU, pooling,
  concatenation    0
  fully connected  in*out + out (bias adds counted)

Bias placement matters for both counts: the grouped 1x1x1 expansion convs
carry no bias, every other conv and the classifier do. That placement is
what the builder emits and is the only assignment that reproduces all three
published parameter totals exactly.
"""

from dataclasses import dataclass

import numpy as np

from .network import infer_shapes
from .ops import BatchNormSpec, Conv3dSpec


@dataclass(frozen=True)
class CostReport:
    per_layer: tuple  # of (name, params, flops)
    total_params: int
    total_flops: int
    input_shape: tuple

    def layer(self, name):
        for row in self.per_layer:
            if row[0] == name:
                return row
        raise KeyError(name)


def count_conv_params(spec):
    kh, kw, kd = spec.kernel
    n = kh * kw * kd * (spec.in_channels // spec.groups) * spec.out_channels
    if spec.has_bias:
        n += spec.out_channels
    return n


def count_bn_params(spec):
    return 2 * spec.channels


def count_fc_params(in_features, out_features):
    return in_features * out_features + out_features


def count_params(spec):
    """Parameter count for a Conv3dSpec, BatchNormSpec or (in, out) pair."""
    if isinstance(spec, Conv3dSpec):
        return count_conv_params(spec)
    if isinstance(spec, BatchNormSpec):
        return count_bn_params(spec)
    fin, fout = spec
    return count_fc_params(fin, fout)


def count_conv_flops(spec, input_extents):
    """MAC-and-bias count for one convolution at the given input size."""
    ho, wo, do = spec.out_extents(input_extents)
    kh, kw, kd = spec.kernel
    per_output = (spec.in_channels // spec.groups) * kh * kw * kd
    if spec.has_bias:
        per_output += 1
    return ho * wo * do * spec.out_channels * per_output


def count_flops(spec, input_extents):
    if isinstance(spec, Conv3dSpec):
        return count_conv_flops(spec, input_extents)
    raise TypeError(f"count_flops expects a Conv3dSpec, got {type(spec).__name__}")


def analyze_network(graph, input_shape):
    """Per-layer and total cost for a batch-1 input of the given shape."""
    shapes = infer_shapes(graph, input_shape)
    rows = []
    for node in graph.nodes:
        params = 0
        flops = 0
        if node.is_conv:
            params = count_conv_params(node.conv)
            flops = count_conv_flops(node.conv, shapes[node.inputs[0]][2:])
        elif node.kind == "batchnorm":
            params = count_bn_params(node.bn)
            flops = 2 * int(np.prod(shapes[node.name]))
        elif node.kind == "fullyConnected":
            fin, fout = node.fc
            params = count_fc_params(fin, fout)
            flops = shapes[node.name][0] * (fin * fout + fout)
        rows.append((node.name, params, flops))
    return CostReport(
        per_layer=tuple(rows),
        total_params=sum(r[1] for r in rows),
        total_flops=sum(r[2] for r in rows),
        input_shape=tuple(input_shape),
    )


def format_count(n):
    """Render a count as the tables do: three decimals with a k/M/G suffix."""
    for threshold, suffix in ((1e9, "G"), (1e6, "M"), (1e3, "k")):
        if n >= threshold:
            return f"{n / threshold:.3f}{suffix}"
    return str(int(n))


def render_text(report):
    lines = [
        f"input shape: {report.input_shape}",
        f"{'layer':<16}{'params':>12}{'flops':>16}",
    ]
    for name, params, flops in report.per_layer:
        lines.append(f"{name:<16}{params:>12}{flops:>16}")
    lines.append(
        f"{'TOTAL':<16}{report.total_params:>12}{report.total_flops:>16}"
        f"   ({format_count(report.total_params)} params, "
        f"{format_count(report.total_flops)} FLOPs)"
    )
    return "\n".join(lines) + "\n"


def render_csv(report):
    lines = ["layerName,params,flops"]
    for name, params, flops in report.per_layer:
        lines.append(f"{name},{params},{flops}")
    lines.append(f"TOTAL,{report.total_params},{report.total_flops}")
    return "\n".join(lines) + "\n"
