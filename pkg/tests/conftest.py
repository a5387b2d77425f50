import json
import random
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).parent))

from netsel.core import Backend, BoundingBox, Detection, GroundTruthBox, NetworkProfile
from netsel.ingest import Dataset, DetectionSet, ImageInfo


def make_dataset(boxes, n_images=None, categories=(1, 2)):
    """boxes: iterable of (image_id, category_id, [x, y, w, h], ignored)."""
    boxes = list(boxes)
    ids = sorted({b[0] for b in boxes} | set(range(1, (n_images or 0) + 1)))
    return Dataset(
        [ImageInfo(i, 640, 480) for i in ids],
        {c: f"cat{c}" for c in categories},
        [GroundTruthBox(i, c, BoundingBox(*bb), bool(ign)) for i, c, bb, ign in boxes],
    )


def make_detset(dets, network_id="net"):
    """dets: iterable of (image_id, category_id, [x, y, w, h], score)."""
    return DetectionSet(network_id, [Detection(i, c, BoundingBox(*bb), s) for i, c, bb, s in dets])


def random_instance(rng: random.Random, max_images=3, max_boxes=5, n_classes=2):
    n_images = rng.randint(1, max_images)
    gts, dets = [], []

    def box():
        return [rng.randint(0, 12), rng.randint(0, 12), rng.randint(1, 10), rng.randint(1, 10)]

    for image in range(1, n_images + 1):
        for _ in range(rng.randint(0, max_boxes)):
            gts.append((image, rng.randint(1, n_classes), box(), rng.random() < 0.1))
        for _ in range(rng.randint(0, max_boxes)):
            # coarse scores so ties happen
            dets.append((image, rng.randint(1, n_classes), box(), rng.randint(0, 10) / 10))
    return make_dataset(gts, n_images=n_images, categories=range(1, n_classes + 1)), make_detset(dets)


def profile(model, backend="GPU", batch=1, latency=10.0, overall=0.3, small=None, medium=None, large=None,
            per_class=None):
    return NetworkProfile(
        model,
        Backend(backend),
        batch,
        latency,
        overall,
        overall if small is None else small,
        overall if medium is None else medium,
        overall if large is None else large,
        per_class or {},
    )


@pytest.fixture
def write_json(tmp_path):
    def _write(name, doc):
        p = tmp_path / name
        p.write_text(json.dumps(doc))
        return p

    return _write


PROFILE_CSV = """model,backend,batch,latency_ms,map_overall,map_small,map_medium,map_large,class:car
perfect,GPU,1,120.0,0.9,0.8,0.9,0.95,0.9
noisy,CPU,1,60.0,0.4,0.1,0.4,0.6,0.5
half,GPU_TRT,8,5.0,0.3,0.05,0.3,0.5,0.45
"""

SCENARIO_CSV = """frame,label,max_latency_ms,min_accuracy,objective
0,city,inf,,class:car
10,highway,50,,class:car
"""


def build_workspace(root: Path, n_images=6, n_rasters=4, n_rows=80):
    """Small on-disk fixture covering every CLI command's inputs."""
    root.mkdir(parents=True, exist_ok=True)
    rng = random.Random(11)
    images, anns = [], []
    for i in range(1, n_images + 1):
        images.append({"id": i, "width": 200, "height": 200, "file_name": f"{i}.png"})
        for _ in range(rng.randint(1, 3)):
            w, h = rng.choice([(20, 20), (50, 40), (120, 100)])
            anns.append({"id": len(anns) + 1, "image_id": i, "category_id": rng.choice([1, 3]),
                         "bbox": [rng.randint(0, 70), rng.randint(0, 70), w, h], "iscrowd": 0})
    (root / "gt.json").write_text(json.dumps(
        {"images": images, "categories": [{"id": 1, "name": "person"}, {"id": 3, "name": "car"}],
         "annotations": anns}))

    det_dir = root / "dets"
    det_dir.mkdir(exist_ok=True)
    perfect = [{"image_id": a["image_id"], "category_id": a["category_id"], "bbox": a["bbox"], "score": 0.9}
               for a in anns]
    noisy = [{**d, "bbox": [d["bbox"][0] + rng.randint(0, 8), d["bbox"][1], d["bbox"][2], d["bbox"][3]],
              "score": round(rng.random(), 2)} for d in perfect]
    half = [d for k, d in enumerate(perfect) if k % 2 == 0]
    for name, dets in [("perfect__GPU__1", perfect), ("noisy__CPU__1", noisy), ("half__GPU_TRT__8", half)]:
        (det_dir / f"{name}.json").write_text(json.dumps(dets))

    (root / "profiles.csv").write_text(PROFILE_CSV)
    (root / "scenario.csv").write_text(SCENARIO_CSV)

    img_dir = root / "images"
    img_dir.mkdir(exist_ok=True)
    nrng = np.random.default_rng(5)
    for k in range(n_rasters):
        pixels = nrng.integers(0, 256, size=(24 + k, 20 + 2 * k, 3)).astype(np.uint8)
        Image.fromarray(pixels).save(img_dir / f"img{k}.png")

    # separable two-class feature table for train/predict
    lines = ["image_id," + ",".join(f"f{j}" for j in range(4))]
    labels = ["image_id,network_id,score,margin"]
    for r in range(n_rows):
        cls = r % 2
        vals = [cls * 5 + nrng.normal() for _ in range(4)]
        lines.append(f"r{r}," + ",".join(repr(float(v)) for v in vals))
        labels.append(f"r{r},{'perfect:GPU:1' if cls else 'half:GPU_TRT:8'},0.5,0.1")
    (root / "table.csv").write_text("\n".join(lines) + "\n")
    (root / "labels.csv").write_text("\n".join(labels) + "\n")
    return root


def cli_runs(ws: Path, out: Path):
    """Argument lists exercising every command against a workspace."""
    common = ["--out", str(out), "--seed", "7"]
    return {
        "eval": ["eval", "--dataset", str(ws / "gt.json"), "--detections", str(ws / "dets" / "*.json"),
                 "--profiles", str(ws / "profiles.csv"), "--per-image", *common],
        "oracle": ["oracle", "--scores", str(out / "per_image.csv"), "--profiles", str(ws / "profiles.csv"),
                   *common],
        "pareto": ["pareto", "--profiles", str(ws / "profiles.csv"), *common],
        "simulate": ["simulate", "--profiles", str(ws / "profiles.csv"), "--scenario", str(ws / "scenario.csv"),
                     "--frames", "20", "--track", "overall", *common],
        "features": ["features", "--images", str(ws / "images"), "--threads", "2", *common],
        "train": ["train", "--features", str(ws / "table.csv"), "--labels", str(ws / "labels.csv"), *common],
        "predict": ["predict", "--model", str(out / "model_knn.json"), "--features", str(ws / "table.csv"),
                    *common],
    }
