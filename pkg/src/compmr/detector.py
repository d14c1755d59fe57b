"""Toy image-detection pipeline: normalizer, cat/dog detectors, pre-detector.

An "image" is a text file with one ``label x y`` line per animal.  The
normalizer applies a piecewise-linear map to coordinates, detectors report
the boxes of their label, and the pre-detector gates the dog detector.
"""

from __future__ import annotations

import random
from pathlib import Path

from .executors import register

LABELS = ("cat", "dog", "bird")


def read_image(path) -> list:
    objs = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            label, x, y = line.split()
            objs.append((label, int(x), int(y)))
    return objs


def write_image(path, objs):
    Path(path).write_text("".join(f"{label} {x} {y}\n" for label, x, y in objs))


def normalize_coord(v: int) -> int:
    # piecewise linear, strictly increasing: equal pixels stay equal
    return 2 * v if v < 50 else v + 50


@register("executor", "detector.normalize")
def normalize(inputs, outputs, params, ctx):
    objs = [(label, normalize_coord(x), normalize_coord(y)) for label, x, y in read_image(inputs["image"])]
    write_image(outputs["image"], objs)


@register("executor", "detector.find")
def find(inputs, outputs, params, ctx):
    label = params["label"]
    boxes = sorted((x, y) for lab, x, y in read_image(inputs["image"]) if lab == label)
    if params.get("fault") == "miss-last" and ctx.is_last and boxes:
        boxes = boxes[:-1]
    Path(outputs["boxes"]).write_text("".join(f"{x} {y}\n" for x, y in boxes))


@register("executor", "detector.gate")
def gate(inputs, outputs, params, ctx):
    Path(outputs["gate"]).write_text(f"{str(params['value']).lower()}\n")


@register("guard", "detector.has_dog")
def has_dog(inputs, params, ctx):
    dogs = any(label == "dog" for label, _, _ in read_image(inputs["image"]))
    return params.get("true", "pre-detector-true") if dogs else params.get("false", "pre-detector-false")


def _boxes(ctx, vertex, k):
    return [tuple(map(int, line.split())) for line in ctx.output(vertex, "boxes", k).read_text().splitlines()]


@register("verdict", "detector.normalizer_preserves")
def normalizer_preserves(ctx, vertex, params):
    """Labels survive in order and coordinate equalities are kept both ways."""
    for k in range(ctx.n):
        src = read_image(ctx.input(vertex, "image", k))
        out = read_image(ctx.output(vertex, "image", k))
        if [o[0] for o in out] != [s[0] for s in src]:
            return False
        for axis in (1, 2):
            same_in = {(i, j) for i in range(len(src)) for j in range(len(src)) if src[i][axis] == src[j][axis]}
            same_out = {(i, j) for i in range(len(out)) for j in range(len(out)) if out[i][axis] == out[j][axis]}
            if same_in != same_out:
                return False
    return True


@register("verdict", "detector.finds_added")
def finds_added(ctx, vertex, params):
    """Each next image keeps every earlier box and gains exactly one."""
    seq = [set(_boxes(ctx, vertex, k)) for k in range(ctx.n)]
    return all(a <= b and len(b) == len(a) + 1 for a, b in zip(seq, seq[1:]))


@register("verdict", "detector.finds_same")
def finds_same(ctx, vertex, params):
    """Starred variant: on the other class's series nothing new appears."""
    if ctx.class_tag in params.get("grow_on", ()):
        return finds_added(ctx, vertex, params)
    seq = [set(_boxes(ctx, vertex, k)) for k in range(ctx.n)]
    return all(a == b for a, b in zip(seq, seq[1:]))


@register("verdict", "detector.gate_constant")
def gate_constant(ctx, vertex, params):
    want = str(params["value"]).lower()
    return all(ctx.output(vertex, "gate", k).read_text().strip() == want for k in range(ctx.n))


@register("generator", "detector.series")
def generate(params, class_tag, index, seed, out_dir):
    """Series of images, each a copy of the previous with one added animal."""
    rng = random.Random(seed)
    n = int(params.get("series_length", 4))
    added = {"add-cat": "cat", "add-dog": "dog", "pre-detector-false": "bird"}[class_tag]
    taken = set()

    def spot():
        while True:
            xy = (rng.randrange(0, 200), rng.randrange(0, 200))
            if xy not in taken:
                taken.add(xy)
                return xy

    if class_tag == "pre-detector-false":
        objs = [("cat", *spot()) for _ in range(rng.randint(1, 3))]
    else:
        objs = [("cat", *spot()) for _ in range(rng.randint(1, 3))] + [("dog", *spot()) for _ in range(rng.randint(1, 2))]
    inputs = []
    for k in range(n):
        if k:
            objs = objs + [(added, *spot())]
        path = Path(out_dir) / f"image_{k}.txt"
        write_image(path, objs)
        inputs.append({"image": str(path)})
    return inputs, {"added": added, "series_length": n}


SPEC_DIR = Path(__file__).parent / "specs"


def spec_path(four_component: bool = False, starred: bool = False) -> Path:
    if four_component:
        return SPEC_DIR / "detector4.yaml"
    return SPEC_DIR / ("detector3_starred.yaml" if starred else "detector3.yaml")
