"""VGG16 and ResNet-50 as declarative layer graphs with named feature taps.

Graphs are immutable descriptions. ``forward_to_tap`` executes a graph
against a :class:`~seedpure.weights.WeightStore` and stops at the
requested tap; layers after the tap never run.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from seedpure import tensor as T
from seedpure.errors import GeometryError, MissingWeightError, ShapeError

VGG16 = "vgg16"
RESNET50 = "resnet50"
MODEL_KINDS = (VGG16, RESNET50)

VGG_TAPS = ("vgg.block3", "vgg.block4", "vgg.block5")
RESNET_TAPS = ("resnet.stage5.block1", "resnet.stage5.block2", "resnet.stage5.block3")
ALL_TAPS = VGG_TAPS + RESNET_TAPS

DEFAULT_GEOMETRY = (3, 75, 170)
BN_EPSILON = 1e-5

VGG_BLOCK_CONVS = (2, 2, 3, 3, 3)
VGG_BLOCK_WIDTHS = (64, 128, 256, 512, 512)
RESNET_STAGE_BLOCKS = (3, 4, 6, 3)
RESNET_STAGE_WIDTHS = (64, 128, 256, 512)
BOTTLENECK_EXPANSION = 4


@dataclass(frozen=True)
class Conv:
    name: str
    in_channels: int
    out_channels: int
    kernel: int
    stride: int = 1
    padding: int = 0
    bias: bool = True


@dataclass(frozen=True)
class BatchNorm:
    name: str
    channels: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool:
    kernel: int
    stride: int
    padding: int = 0


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Linear:
    name: str
    in_features: int
    out_features: int


@dataclass(frozen=True)
class Bottleneck:
    """1x1 reduce -> 3x3 (carries the stride) -> 1x1 expand, plus skip path."""
    name: str
    in_channels: int
    mid_channels: int
    stride: int
    projection: bool

    @property
    def out_channels(self) -> int:
        return self.mid_channels * BOTTLENECK_EXPANSION

    @property
    def branch(self) -> Tuple:
        n, mid = self.name, self.mid_channels
        return (
            Conv(f"{n}.conv1", self.in_channels, mid, 1, 1, 0, bias=False),
            BatchNorm(f"{n}.bn1", mid),
            ReLU(),
            Conv(f"{n}.conv2", mid, mid, 3, self.stride, 1, bias=False),
            BatchNorm(f"{n}.bn2", mid),
            ReLU(),
            Conv(f"{n}.conv3", mid, self.out_channels, 1, 1, 0, bias=False),
            BatchNorm(f"{n}.bn3", self.out_channels),
        )

    @property
    def skip(self) -> Tuple:
        if not self.projection:
            return ()
        return (
            Conv(f"{self.name}.downsample.conv", self.in_channels, self.out_channels, 1,
                 self.stride, 0, bias=False),
            BatchNorm(f"{self.name}.downsample.bn", self.out_channels),
        )


@dataclass(frozen=True)
class Block:
    name: str
    layers: Tuple


@dataclass(frozen=True)
class ParamSpec:
    name: str
    shape: Tuple[int, ...]
    role: str  # weight | bias | gamma | beta | running_mean | running_var
    fan_in: int = 0


@dataclass(frozen=True)
class ModelGraph:
    model_kind: str
    blocks: Tuple[Block, ...]
    input_geometry: Tuple[int, int, int]
    taps: Dict[str, int] = field(default_factory=dict)

    def tap_index(self, tap: str) -> int:
        if tap not in self.taps:
            valid = ", ".join(self.taps)
            raise KeyError(f"tap {tap!r} not in {self.model_kind} graph; valid taps: {valid}")
        return self.taps[tap]

    def block_shapes(self) -> List[Tuple[int, ...]]:
        """Per-sample output shape after every block."""
        shape: Tuple[int, ...] = tuple(self.input_geometry)
        shapes = []
        for block in self.blocks:
            for layer in block.layers:
                shape = _layer_shape(layer, shape)
            shapes.append(shape)
        return shapes

    def tap_shape(self, tap: str) -> Tuple[int, ...]:
        return self.block_shapes()[self.tap_index(tap)]

    def parameters(self, upto: Optional[str] = None) -> List[ParamSpec]:
        """Parameters needed to run up to tap ``upto``.

        With ``upto=None`` the set covers every registered tap, which is
        what :func:`forward_to_tap` can ever touch. Head layers beyond the
        last tap are not included.
        """
        if upto is None:
            last = max(self.taps.values())
        else:
            last = self.tap_index(upto)
        specs: List[ParamSpec] = []
        for block in self.blocks[: last + 1]:
            for layer in _flat_layers(block.layers):
                specs.extend(_layer_params(layer))
        return specs

    def head_parameters(self) -> List[ParamSpec]:
        last = max(self.taps.values())
        specs: List[ParamSpec] = []
        for block in self.blocks[last + 1:]:
            for layer in _flat_layers(block.layers):
                specs.extend(_layer_params(layer))
        return specs


def _flat_layers(layers: Iterable) -> Iterable:
    for layer in layers:
        if isinstance(layer, Bottleneck):
            yield from layer.branch
            yield from layer.skip
        else:
            yield layer


def _layer_params(layer) -> List[ParamSpec]:
    if isinstance(layer, Conv):
        k = layer.kernel
        fan_in = layer.in_channels * k * k
        out = [ParamSpec(f"{layer.name}.weight", (layer.out_channels, layer.in_channels, k, k),
                         "weight", fan_in)]
        if layer.bias:
            out.append(ParamSpec(f"{layer.name}.bias", (layer.out_channels,), "bias", fan_in))
        return out
    if isinstance(layer, BatchNorm):
        return [ParamSpec(f"{layer.name}.{role}", (layer.channels,), role)
                for role in ("gamma", "beta", "running_mean", "running_var")]
    if isinstance(layer, Linear):
        return [
            ParamSpec(f"{layer.name}.weight", (layer.in_features, layer.out_features), "weight",
                      layer.in_features),
            ParamSpec(f"{layer.name}.bias", (layer.out_features,), "bias", layer.in_features),
        ]
    return []


def _spatial(size: int, kernel: int, stride: int, padding: int, what: str) -> int:
    if size + 2 * padding < kernel:
        raise GeometryError(f"geometry too small: {what} sees {size}px with kernel {kernel}")
    return T.out_size(size, kernel, stride, padding)


def _layer_shape(layer, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    if isinstance(layer, Conv):
        c, h, w = shape
        return (layer.out_channels,
                _spatial(h, layer.kernel, layer.stride, layer.padding, layer.name),
                _spatial(w, layer.kernel, layer.stride, layer.padding, layer.name))
    if isinstance(layer, MaxPool):
        c, h, w = shape
        return (c, _spatial(h, layer.kernel, layer.stride, layer.padding, "maxpool"),
                _spatial(w, layer.kernel, layer.stride, layer.padding, "maxpool"))
    if isinstance(layer, Bottleneck):
        for sub in layer.branch:
            shape = _layer_shape(sub, shape)
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Linear):
        return (layer.out_features,)
    return shape


def _check_geometry(geometry) -> Tuple[int, int, int]:
    geometry = tuple(int(g) for g in geometry)
    if len(geometry) != 3 or geometry[0] != 3:
        raise GeometryError(f"input geometry must be (3, height, width), got {geometry}")
    if geometry[1] < 1 or geometry[2] < 1:
        raise GeometryError(f"input geometry must be positive, got {geometry}")
    return geometry  # type: ignore[return-value]


def build_vgg16(geometry=DEFAULT_GEOMETRY, num_classes: int = 1000) -> ModelGraph:
    geometry = _check_geometry(geometry)
    if geometry[1] < 32 or geometry[2] < 32:
        raise GeometryError(
            f"geometry too small for VGG16: {geometry[1]}x{geometry[2]} (need >= 32x32)")
    blocks = []
    in_c = geometry[0]
    for b, (n_convs, width) in enumerate(zip(VGG_BLOCK_CONVS, VGG_BLOCK_WIDTHS), start=1):
        layers = []
        for i in range(1, n_convs + 1):
            layers.append(Conv(f"vgg.block{b}.conv{i}", in_c, width, 3, 1, 1))
            layers.append(ReLU())
            in_c = width
        layers.append(MaxPool(2, 2, 0))
        blocks.append(Block(f"block{b}", tuple(layers)))
    graph = ModelGraph(VGG16, tuple(blocks), geometry)
    flat = int(np.prod(graph.block_shapes()[-1]))
    head = Block("head", (
        Flatten(),
        Linear("vgg.fc1", flat, 4096), ReLU(),
        Linear("vgg.fc2", 4096, 4096), ReLU(),
        Linear("vgg.fc3", 4096, num_classes),
    ))
    taps = {tap: i for i, tap in zip((2, 3, 4), VGG_TAPS)}
    return ModelGraph(VGG16, tuple(blocks) + (head,), geometry, taps)


def build_resnet50(geometry=DEFAULT_GEOMETRY) -> ModelGraph:
    geometry = _check_geometry(geometry)
    blocks = [Block("stem", (
        Conv("resnet.stem.conv", geometry[0], 64, 7, 2, 3, bias=False),
        BatchNorm("resnet.stem.bn", 64),
        ReLU(),
        MaxPool(3, 2, 1),
    ))]
    in_c = 64
    taps = {}
    for s, (n_blocks, mid) in enumerate(zip(RESNET_STAGE_BLOCKS, RESNET_STAGE_WIDTHS), start=2):
        for b in range(1, n_blocks + 1):
            stride = 2 if (b == 1 and s > 2) else 1
            out_c = mid * BOTTLENECK_EXPANSION
            projection = stride != 1 or in_c != out_c
            name = f"resnet.stage{s}.block{b}"
            blocks.append(Block(f"stage{s}.block{b}",
                                (Bottleneck(name, in_c, mid, stride, projection),)))
            in_c = out_c
            if s == 5:
                taps[name] = len(blocks) - 1
    graph = ModelGraph(RESNET50, tuple(blocks), geometry, taps)
    try:
        graph.block_shapes()
    except GeometryError as exc:
        raise GeometryError(f"geometry too small for ResNet-50: {geometry} ({exc})") from None
    return graph


def build_graph(kind: str, geometry=DEFAULT_GEOMETRY) -> ModelGraph:
    kind = kind.lower().replace("-", "")
    if kind == VGG16:
        return build_vgg16(geometry)
    if kind == RESNET50:
        return build_resnet50(geometry)
    raise ValueError(f"unknown model {kind!r}; expected one of {', '.join(MODEL_KINDS)}")


def taps_for(kind: str) -> Tuple[str, ...]:
    return VGG_TAPS if kind == VGG16 else RESNET_TAPS


# -- execution ---------------------------------------------------------------

def _param(weights, name: str) -> np.ndarray:
    try:
        return weights[name]
    except KeyError:
        raise MissingWeightError(name) from None


def _conv_spec(layer: Conv, weights) -> T.ConvSpec:
    w = _param(weights, f"{layer.name}.weight")
    b = _param(weights, f"{layer.name}.bias") if layer.bias else None
    return T.ConvSpec(layer.in_channels, layer.out_channels, layer.kernel, layer.kernel,
                      layer.stride, layer.padding, w, b)


def _bn_spec(layer: BatchNorm, weights) -> T.BatchNormSpec:
    return T.BatchNormSpec(
        _param(weights, f"{layer.name}.gamma"),
        _param(weights, f"{layer.name}.beta"),
        _param(weights, f"{layer.name}.running_mean"),
        _param(weights, f"{layer.name}.running_var"),
        BN_EPSILON,
    )


def _run_layers(layers: Sequence, weights, x: np.ndarray) -> np.ndarray:
    for layer in layers:
        x = _run_layer(layer, weights, x)
    return x


def _run_layer(layer, weights, x: np.ndarray) -> np.ndarray:
    if isinstance(layer, Conv):
        return T.conv2d(x, _conv_spec(layer, weights))
    if isinstance(layer, BatchNorm):
        return T.batchnorm_infer(x, _bn_spec(layer, weights))
    if isinstance(layer, ReLU):
        return T.relu(x)
    if isinstance(layer, MaxPool):
        return T.maxpool2d(x, layer.kernel, layer.stride, layer.padding)
    if isinstance(layer, Bottleneck):
        return bottleneck_forward(layer, weights, x)
    if isinstance(layer, Flatten):
        return x.reshape(x.shape[0], -1)
    if isinstance(layer, Linear):
        return T.linear(x, _param(weights, f"{layer.name}.weight"),
                        _param(weights, f"{layer.name}.bias"))
    raise TypeError(f"unknown layer {layer!r}")


def bottleneck_forward(block: Bottleneck, weights, x: np.ndarray,
                       trace: Optional[dict] = None) -> np.ndarray:
    """relu(skip(x) + branch(x)); ``trace`` receives the two summands."""
    branch = _run_layers(block.branch, weights, x)
    skip = _run_layers(block.skip, weights, x) if block.projection else x
    if trace is not None:
        trace["branch"] = branch
        trace["skip"] = skip
    return T.relu(T.add(skip, branch))


def _check_batch(graph: ModelGraph, batch: np.ndarray) -> np.ndarray:
    batch = np.ascontiguousarray(batch, dtype=np.float32)
    if batch.ndim == 3:
        batch = batch[None]
    if batch.ndim != 4 or tuple(batch.shape[1:]) != tuple(graph.input_geometry):
        raise GeometryError(
            f"batch shape {tuple(batch.shape)} does not match graph input "
            f"(N, {', '.join(map(str, graph.input_geometry))})")
    return batch


def forward_taps(graph: ModelGraph, weights, batch: np.ndarray,
                 taps: Sequence[str]) -> Dict[str, np.ndarray]:
    """Activations at several taps from a single pass."""
    batch = _check_batch(graph, batch)
    wanted = {graph.tap_index(t): t for t in taps}
    if len(wanted) != len(set(taps)):
        raise ShapeError("duplicate tap indices")
    last = max(wanted)
    out = {}
    x = batch
    for i, block in enumerate(graph.blocks[: last + 1]):
        x = _run_layers(block.layers, weights, x)
        if i in wanted:
            out[wanted[i]] = x
    return out


def forward_to_tap(graph: ModelGraph, weights, batch: np.ndarray, tap: str) -> np.ndarray:
    return forward_taps(graph, weights, batch, [tap])[tap]
