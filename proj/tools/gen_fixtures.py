#!/usr/bin/env python3
#
# SPDX-License-Identifier: Apache-2.0
#
"""Generate the model and device fixtures under fixtures/."""

import argparse
import json
import pathlib


class Builder:
    def __init__(self, name, shape, word_length=16):
        self.doc = {
            "name": name,
            "input": {"id": "input", "shape": list(shape), "word_length": word_length},
            "vertices": [],
            "edges": [],
        }
        self.counter = 0

    def add(self, kind, inputs, label=None, **attrs):
        vid = f"{label or kind}_{self.counter}"
        self.counter += 1
        v = {"id": vid, "kind": kind}
        if attrs:
            v["attrs"] = attrs
        self.doc["vertices"].append(v)
        for slot, src in enumerate(inputs):
            if src == "input":
                # The input id names the vertex that receives the external tensor.
                assert self.doc["input"]["id"] == "input" and len(inputs) == 1
                self.doc["input"]["id"] = vid
                continue
            self.doc["edges"].append({"src": src, "dst": vid, "dst_slot": slot})
        return vid

    def conv(self, x, filters, kernel=3, stride=1, pad=None, groups=1, **kw):
        if pad is None:
            pad = [k // 2 for k in kernel] if isinstance(kernel, list) else kernel // 2
        return self.add("Conv", [x], kernel=kernel, stride=stride, pad=pad, filters=filters,
                        groups=groups, **kw)

    def act(self, x, function="relu", label="Relu"):
        return self.add("Relu", [x], label=label, function=function)

    def pool(self, x, kernel=2, stride=None, pad=0, mode="max"):
        attrs = {"kernel": kernel, "pad": pad, "mode": mode}
        if stride is not None:
            attrs["stride"] = stride
        return self.add("Pool", [x], label="MaxPool" if mode == "max" else "AveragePool", **attrs)


def weights(doc):
    """Weight count from the document alone (channels tracked locally)."""
    chans = {"": doc["input"]["shape"][0]}
    ins = {}
    for e in doc["edges"]:
        ins.setdefault(e["dst"], []).append((e["dst_slot"], e["src"]))
    total = 0
    for v in doc["vertices"]:
        srcs = [chans[s] for _, s in sorted(ins.get(v["id"], [(0, "")]))]
        a = v.get("attrs", {})
        if v["kind"] == "Conv":
            k = a["kernel"]
            kv = 1
            for d in (k if isinstance(k, list) else [k] * (len(doc["input"]["shape"]) - 1)):
                kv *= d
            total += kv * srcs[0] // a.get("groups", 1) * a["filters"]
            chans[v["id"]] = a["filters"]
        elif v["kind"] == "Concat":
            chans[v["id"]] = sum(srcs)
        else:
            chans[v["id"]] = srcs[0]
    return total


def linear():
    b = Builder("linear", [8, 16, 16])
    x = b.conv("input", 8)
    x = b.act(x)
    x = b.conv(x, 16, kernel=1)
    x = b.act(x)
    b.pool(x)
    return b.doc


def diamond():
    # Two branches of different depth reconverging at an Add.
    b = Builder("diamond", [8, 16, 16])
    x = b.act(b.conv("input", 8, kernel=1))
    short = b.act(x, label="Identity", function="identity")
    long_ = b.act(b.conv(x, 8))
    long_ = b.conv(long_, 8)
    y = b.add("Add", [short, long_])
    b.act(y)
    return b.doc


def long_skip():
    b = Builder("long_skip", [8, 32, 32])
    x = b.act(b.conv("input", 8))
    d = b.pool(x)
    d = b.act(b.conv(d, 16))
    d = b.act(b.conv(d, 16))
    u = b.add("Upsample", [d], scale=2)
    u = b.conv(u, 8, kernel=1)
    c = b.add("Concat", [x, u])
    b.conv(c, 8)
    return b.doc


def unet(name, shape, classes=11):
    b = Builder(name, shape, word_length=8)
    x = "input"
    skips = []
    for i, c in enumerate([64, 128, 256, 512, 1024]):
        x = b.act(b.conv(x, c))
        x = b.act(b.conv(x, c))
        if i < 4:
            skips.append(x)
            x = b.pool(x)
    for i, c in enumerate([512, 256, 128, 64]):
        x = b.add("Upsample", [x], scale=2)
        if c == 64:
            x = b.conv(x, c, kernel=2, pads=[[0, 1], [0, 1]])
        else:
            x = b.conv(x, c, kernel=1)
        x = b.add("Concat", [skips.pop(), x])
        x = b.act(b.conv(x, c))
        x = b.act(b.conv(x, c))
    b.conv(x, classes, kernel=1)
    return b.doc


def unet3d(shape=(4, 152, 240, 240), classes=3):
    b = Builder("unet3d", shape, word_length=16)
    x = b.act(b.conv("input", 16, kernel=1))
    skips = []
    levels = [32, 64, 128, 276]
    for i, c in enumerate(levels):
        for _ in range(2):
            x = b.conv(x, c)
            x = b.act(x, function="groupnorm", label="GroupNorm")
            x = b.act(x)
        if i < len(levels) - 1:
            skips.append(x)
            x = b.pool(x)
    for c in reversed(levels[:-1]):
        x = b.add("Upsample", [x], scale=2)
        x = b.conv(x, c, kernel=1)
        x = b.add("Concat", [skips.pop(), x])
        x = b.act(b.conv(x, c))
        x = b.act(b.conv(x, c))
    x = b.conv(x, classes, kernel=1)
    b.act(x, function="sigmoid", label="Sigmoid")
    return b.doc


def yolov8n(shape=(3, 640, 640), classes=80):
    b = Builder("yolov8n", shape, word_length=8)
    acts = {"left": 28}

    def cbs(x, c, k=1, s=1):
        y = b.conv(x, c, kernel=k, stride=s)
        if acts["left"] > 0:
            acts["left"] -= 1
            y = b.act(y, function="silu", label="Silu")
        return y

    def c2f(x, c, n, shortcut):
        y = cbs(x, c, 1)
        parts = [y]
        h = c // 2
        cur = y
        for _ in range(n):
            t = cbs(cur, h, 3)
            t = b.conv(t, c, kernel=3)
            cur = b.add("Add", [cur, t]) if shortcut else t
            parts.append(cur)
        cat = b.add("Concat", parts)
        return cbs(cat, c, 1)

    x = cbs("input", 16, 3, 2)
    x = cbs(x, 32, 3, 2)
    x = c2f(x, 32, 1, True)
    x = cbs(x, 64, 3, 2)
    p3 = c2f(x, 64, 2, True)
    x = cbs(p3, 128, 3, 2)
    p4 = c2f(x, 128, 2, True)
    x = cbs(p4, 256, 3, 2)
    x = c2f(x, 256, 1, True)
    # Spatial pyramid pooling: three chained 5x5 max pools.
    s = cbs(x, 128, 1)
    p1 = b.pool(s, kernel=5, stride=1, pad=2)
    p2 = b.pool(p1, kernel=5, stride=1, pad=2)
    p3b = b.pool(p2, kernel=5, stride=1, pad=2)
    p5 = cbs(b.add("Concat", [s, p1, p2, p3b]), 256, 1)

    u = b.add("Upsample", [p5], scale=2)
    h4 = c2f(b.add("Concat", [u, p4]), 128, 1, False)
    u = b.add("Upsample", [h4], scale=2)
    o3 = c2f(b.add("Concat", [u, p3]), 64, 1, False)
    d = cbs(o3, 64, 3, 2)
    o4 = c2f(b.add("Concat", [d, h4]), 128, 1, False)
    d = cbs(o4, 128, 3, 2)
    o5 = c2f(b.add("Concat", [d, p5]), 256, 1, False)

    for o in (o3, o4, o5):
        box = b.conv(b.conv(o, 64), 64)
        b.conv(box, 64, kernel=1)
        cls = b.conv(b.conv(o, 64), 64)
        b.conv(cls, classes, kernel=1)
    assert acts["left"] == 0
    return b.doc


def x3dm(shape=(3, 16, 224, 224), classes=400):
    b = Builder("x3dm", shape, word_length=8)

    def bn(x):
        return b.act(x, function="batchnorm", label="BatchNorm")

    x = b.conv("input", 24, kernel=[1, 3, 3], stride=[1, 2, 2], pad=[0, 1, 1])
    x = bn(x)
    x = b.conv(x, 24, kernel=[5, 1, 1], pad=[2, 0, 0], groups=24)
    x = b.act(bn(x))
    se_left = 14
    for depth, c in zip([3, 5, 11, 7], [24, 48, 96, 192]):
        inner = int(c * 2.25)
        for i in range(depth):
            stride = [1, 2, 2] if i == 0 else 1
            y = b.act(bn(b.conv(x, inner, kernel=1)))
            y = bn(b.conv(y, inner, kernel=3, stride=stride, groups=inner))
            if i % 2 == 0 and se_left > 0:
                se_left -= 1
                s = b.add("GlobalPool", [y], mode="avg")
                s = b.act(b.conv(s, max(8, inner // 16), kernel=1))
                s = b.act(b.conv(s, inner, kernel=1), function="sigmoid", label="Sigmoid")
                y = b.add("Add", [y, s], label="Mul", mode="mul")
            g = b.act(y, function="sigmoid", label="Sigmoid")
            y = b.add("Add", [y, g], label="Mul", mode="mul")
            y = bn(b.conv(y, c, kernel=1))
            if i == 0:
                sc = bn(b.conv(x, c, kernel=1, stride=[1, 2, 2], pad=0))
            else:
                sc = x
            x = b.act(b.add("Add", [sc, y]))
        x = b.act(x, function="identity", label="Identity")
    x = b.act(bn(b.conv(x, 432, kernel=1)))
    x = b.add("GlobalPool", [x], mode="avg")
    x = b.act(b.conv(x, 2048, kernel=1))
    x = b.act(x, function="dropout", label="Dropout")
    x = b.conv(x, classes, kernel=1)
    b.act(x, function="softmax", label="Softmax")
    return b.doc


DEVICES = {
    "zcu102": dict(freq_mhz=200, dsp=2520, lut=274080, ff=548160, bram18k=1824, uram=0,
                   bandwidth_gbps=153.6, reconfig_time_s=0.03),
    "u200": dict(freq_mhz=250, dsp=6840, lut=1182240, ff=2364480, bram18k=4320, uram=960,
                 bandwidth_gbps=614.4, reconfig_time_s=0.06),
    "vcu1525": dict(freq_mhz=250, dsp=6840, lut=1182240, ff=2364480, bram18k=4320, uram=960,
                    bandwidth_gbps=614.4, reconfig_time_s=0.06),
    "vcu118": dict(freq_mhz=250, dsp=6840, lut=1182240, ff=2364480, bram18k=4320, uram=960,
                   bandwidth_gbps=307.2, reconfig_time_s=0.06),
    # Small part used by tests to force eviction and fragmentation.
    "tiny": dict(freq_mhz=200, dsp=360, lut=70560, ff=141120, bram18k=432, uram=0,
                 bandwidth_gbps=19.2, reconfig_time_s=0.01),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "fixtures"))
    ap.add_argument("--stats", action="store_true", help="print layer and weight counts")
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    (out / "models").mkdir(parents=True, exist_ok=True)
    (out / "devices").mkdir(parents=True, exist_ok=True)

    models = {
        "linear": linear(),
        "diamond": diamond(),
        "long_skip": long_skip(),
        "unet": unet("unet", [3, 368, 480]),
        "unet_small": unet("unet_small", [3, 176, 176]),
        "unet3d": unet3d(),
        "yolov8n": yolov8n(),
        "x3dm": x3dm(),
    }
    for name, doc in models.items():
        (out / "models" / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")
        if args.stats:
            kinds = {}
            for v in doc["vertices"]:
                kinds[v["kind"]] = kinds.get(v["kind"], 0) + 1
            print(f"{name}: layers={len(doc['vertices'])} weights={weights(doc)} {kinds}")

    for name, fields in DEVICES.items():
        d = {"name": name, "dma_burst_words": 64, "dma_latency_cycles": 512, "alpha_random": 2.0, "max_dma_ports": 4}
        d.update(fields)
        (out / "devices" / f"{name}.json").write_text(json.dumps(d, indent=1) + "\n")


if __name__ == "__main__":
    main()
