"""Shape propagation for the three-scale depth network.

Conventions that reproduce every printed resolution from a 576x172 input:
strided 9x9/11x11 convolutions use valid padding, stride-1 convolutions keep
the size, pooling yields ``ceil(size / stride)``, slices trim to a stated
size, upsampling multiplies, and concat stacks channels of equal-size maps.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

KINDS = {"conv", "pool", "fc", "reshape", "upsample", "slice", "concat"}


class ArchitectureError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    name: str
    kind: str
    kernel: int | None = None
    stride: int = 1
    channels: int | None = None
    padding: str = "same"
    factor: int | None = None
    size: tuple | None = None
    source: str | None = None
    expect: tuple | None = None

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("kind") not in KINDS:
            raise ArchitectureError(f"layer {d.get('name')!r}: unknown kind {d.get('kind')!r}")
        for key in ("size", "expect"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ScaleSpec:
    name: str
    layers: tuple


@dataclass(frozen=True)
class ArchitectureSpec:
    input_size: tuple
    input_channels: int
    scales: tuple = field(default_factory=tuple)

    @classmethod
    def from_dict(cls, d):
        scales = tuple(
            ScaleSpec(s["name"], tuple(LayerSpec.from_dict(layer) for layer in s["layers"])) for s in d["scales"]
        )
        inp = d["input"]
        return cls((int(inp["width"]), int(inp["height"])), int(inp["channels"]), scales)


def load_architecture(path=None) -> ArchitectureSpec:
    """Load an architecture file; without a path, the bundled three-scale fisheye network."""
    if path is None:
        text = resources.files("fisheyedepth").joinpath("data/multiscale_fisheye.json").read_text()
    else:
        with open(path) as f:
            text = f.read()
    return ArchitectureSpec.from_dict(json.loads(text))


@dataclass(frozen=True)
class ShapeRow:
    scale: str
    layer: str
    kind: str
    width: int
    height: int
    channels: int
    expect: tuple | None

    @property
    def ok(self):
        if self.expect is None:
            return True
        got = (self.width, self.height, self.channels)
        return all(e is None or e == g for e, g in zip(self.expect, got))


@dataclass(frozen=True)
class ArchitectureReport:
    rows: tuple

    @property
    def passed(self):
        return all(r.ok for r in self.rows)

    def row(self, scale, layer):
        for r in self.rows:
            if r.scale == scale and r.layer == layer:
                return r
        raise KeyError((scale, layer))

    def to_text(self):
        lines = [f"{'scale':<8} {'layer':<10} {'kind':<9} {'resolution':>11} {'channels':>9}  check"]
        for r in self.rows:
            mark = "-" if r.expect is None else ("ok" if r.ok else f"FAIL expected {_fmt_expect(r.expect)}")
            lines.append(f"{r.scale:<8} {r.layer:<10} {r.kind:<9} {f'{r.width}x{r.height}':>11} {r.channels:>9}  {mark}")
        lines.append("PASS" if self.passed else "FAIL")
        return "\n".join(lines) + "\n"


def _fmt_expect(e):
    w, h, c = e
    res = "?" if w is None else f"{w}x{h}"
    return f"{res}x{'-' if c is None else c}"


def _conv_out(n, kernel, stride, padding):
    if padding == "valid":
        return (n - kernel) // stride + 1
    if padding == "same":
        return math.ceil(n / stride)
    raise ArchitectureError(f"unknown padding {padding!r}")


def _propagate(layer: LayerSpec, shape, outputs):
    w, h, c = shape
    k = layer.kind
    if k == "conv":
        w = _conv_out(w, layer.kernel, layer.stride, layer.padding)
        h = _conv_out(h, layer.kernel, layer.stride, layer.padding)
        c = layer.channels
    elif k == "pool":
        w, h = math.ceil(w / layer.stride), math.ceil(h / layer.stride)
    elif k == "fc":
        w, h, c = 1, 1, layer.channels
    elif k == "reshape":
        rw, rh = layer.size
        if rw * rh * layer.channels != w * h * c:
            raise ArchitectureError(
                f"{layer.name}: cannot reshape {w}x{h}x{c} into {rw}x{rh}x{layer.channels}")
        w, h, c = rw, rh, layer.channels
    elif k == "upsample":
        w, h = w * layer.factor, h * layer.factor
    elif k == "slice":
        sw, sh = layer.size
        if sw > w or sh > h:
            raise ArchitectureError(f"{layer.name}: slice {sw}x{sh} larger than input {w}x{h}")
        w, h = sw, sh
    elif k == "concat":
        if layer.source not in outputs:
            raise ArchitectureError(f"{layer.name}: unknown concat source {layer.source!r}")
        ow, oh, oc = outputs[layer.source]
        if (ow, oh) != (w, h):
            raise ArchitectureError(f"{layer.name}: concat of {w}x{h} with {ow}x{oh} maps")
        c = c + oc
        if layer.channels is not None and layer.channels != c:
            raise ArchitectureError(f"{layer.name}: concat gives {c} channels, spec says {layer.channels}")
    if w <= 0 or h <= 0:
        raise ArchitectureError(f"{layer.name}: non-positive size {w}x{h}")
    return w, h, c


def verify_architecture(spec: ArchitectureSpec, input_size=None) -> ArchitectureReport:
    """Propagate shapes through every scale and compare with the expected cells."""
    w, h = spec.input_size if input_size is None else input_size
    outputs = {}
    rows = []
    for scale in spec.scales:
        shape = (w, h, spec.input_channels)
        for layer in scale.layers:
            shape = _propagate(layer, shape, outputs)
            rows.append(ShapeRow(scale.name, layer.name, layer.kind, *shape, layer.expect))
        outputs[scale.name] = shape
    return ArchitectureReport(tuple(rows))
