import io
import logging

import pytest

from netsel.core import DanglingReference, DuplicateProfile, MalformedFile, SizeBucket, area_bucket
from netsel.ingest import (
    dump_detections,
    dump_ground_truth,
    dump_profiles,
    load_detections,
    load_ground_truth,
    load_profiles,
    parse_profiles,
)

HEADER = "model,backend,batch,latency_ms,map_overall,map_small,map_medium,map_large"

MODELS = [
    "faster-rcnn-resnet50", "faster-rcnn-resnet101", "faster-rcnn-nas", "faster-rcnn-inception-resnet-v2",
    "ssd-mobilenet-v1-fpn", "ssd-mobilenet-v1-quantized", "ssd-mobilenet-v1", "ssd-resnet50-fpn",
    "ssd-inception-v2", "ssdlite-mobilenet-v2", "rcnn-inception-v2", "yolo-v3",
]
BACKENDS = ["CPU", "CPU_AVX2", "GPU", "GPU_TRT", "GPU_TRT_DYN"]
BATCHES = [1, 2, 4, 8, 16, 32]


def gt_doc(annotations, images=(1,), categories=(1,)):
    return {
        "images": [{"id": i, "width": 100, "height": 100, "file_name": f"{i}.png"} for i in images],
        "categories": [{"id": c, "name": f"c{c}"} for c in categories],
        "annotations": annotations,
    }


def test_minimal_ground_truth(write_json):
    ds = load_ground_truth(write_json("gt.json", gt_doc([{"id": 1, "image_id": 1, "category_id": 1,
                                                        "bbox": [10, 10, 20, 20]}])))
    assert len(ds.ground_truth) == 1
    assert area_bucket(ds.ground_truth[0].box) is SizeBucket.SMALL
    assert not ds.ground_truth[0].ignored


def test_dangling_image(write_json):
    doc = gt_doc([{"id": 1, "image_id": 99, "category_id": 1, "bbox": [0, 0, 5, 5]}])
    with pytest.raises(DanglingReference):
        load_ground_truth(write_json("gt.json", doc))


def test_dangling_category(write_json):
    doc = gt_doc([{"id": 1, "image_id": 1, "category_id": 7, "bbox": [0, 0, 5, 5]}])
    with pytest.raises(DanglingReference):
        load_ground_truth(write_json("gt.json", doc))


def test_grouping_by_image(write_json):
    anns = [
        {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5]},
        {"id": 2, "image_id": 2, "category_id": 2, "bbox": [1, 1, 5, 5], "iscrowd": 1},
        {"id": 3, "image_id": 1, "category_id": 2, "bbox": [2, 2, 50, 50]},
    ]
    ds = load_ground_truth(write_json("gt.json", gt_doc(anns, images=(1, 2), categories=(1, 2))))
    got = {i: [(g.category_id, g.box.as_list(), g.ignored) for g in ds.boxes_for(i)] for i in ds.image_ids}
    assert got == {
        1: [(1, [0, 0, 5, 5], False), (2, [2, 2, 50, 50], False)],
        2: [(2, [1, 1, 5, 5], True)],
    }


def test_degenerate_boxes_dropped_and_counted(write_json, caplog):
    anns = [
        {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0, 0, 0, 5]},
        {"id": 2, "image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5]},
    ]
    with caplog.at_level(logging.WARNING):
        ds = load_ground_truth(write_json("gt.json", gt_doc(anns)))
    assert len(ds.ground_truth) == 1
    assert ds.dropped_boxes == 1
    assert "dropped 1" in caplog.text


def test_malformed_json(tmp_path):
    p = tmp_path / "gt.json"
    p.write_text("{not json")
    with pytest.raises(MalformedFile):
        load_ground_truth(p)


def test_load_detections(write_json):
    ds = load_ground_truth(write_json("gt.json", gt_doc([], images=(1, 2))))
    recs = [
        {"image_id": 1, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 0.5},
        {"image_id": 2, "category_id": 1, "bbox": [0, 0, 5, 5], "score": 1.3},
    ]
    dets = load_detections(write_json("yolo-v3__GPU__8.json", recs), ds)
    assert len(dets) == 2
    assert dets.network_id == "yolo-v3:GPU:8"
    assert dets.detections[1].score == 1.0
    assert dets.clamped == 1


def test_empty_detections(write_json):
    ds = load_ground_truth(write_json("gt.json", gt_doc([])))
    assert len(load_detections(write_json("d.json", []), ds)) == 0


def test_detection_for_unknown_image(write_json):
    ds = load_ground_truth(write_json("gt.json", gt_doc([])))
    with pytest.raises(DanglingReference):
        load_detections(write_json("d.json", [{"image_id": 5, "category_id": 1, "bbox": [0, 0, 1, 1],
                                               "score": 0.1}]), ds)


def test_profile_row():
    (p,) = parse_profiles(io.StringIO(HEADER + "\nfaster-rcnn-nas,GPU,1,3200.0,0.44,0.20,0.48,0.60\n"))
    assert p.map_overall == 0.44
    assert p.latency_ms == 3200.0
    assert p.network_id == "faster-rcnn-nas:GPU:1"


def test_duplicate_profile():
    text = HEADER + "\na,GPU,1,10,0.1,0.1,0.1,0.1\na,GPU,1,12,0.2,0.2,0.2,0.2\n"
    with pytest.raises(DuplicateProfile):
        parse_profiles(io.StringIO(text))


def test_bad_header_and_backend():
    with pytest.raises(MalformedFile):
        parse_profiles(io.StringIO("model,latency\na,1\n"))
    with pytest.raises(MalformedFile):
        parse_profiles(io.StringIO(HEADER + "\na,TPU,1,10,0.1,0.1,0.1,0.1\n"))


def test_odd_batch_warns(caplog):
    with caplog.at_level(logging.WARNING):
        (p,) = parse_profiles(io.StringIO(HEADER + "\na,GPU,3,10,0.1,0.1,0.1,0.1\n"))
    assert p.batch_size == 3
    assert "batch sizes" in caplog.text


def test_full_campaign_table(tmp_path):
    lines = [HEADER]
    for i, m in enumerate(MODELS):
        for b in BACKENDS:
            for n in BATCHES:
                lines.append(f"{m},{b},{n},{10 + i + n},0.3,0.1,0.3,0.5")
    path = tmp_path / "p.csv"
    path.write_text("\n".join(lines) + "\n")
    assert len(load_profiles(path)) == 360


def test_per_class_columns_round_trip(tmp_path):
    text = HEADER + ",class:car,class:3\na,GPU,1,10.5,0.1,0.2,0.3,0.4,0.6,\nb,CPU,2,99,0.1,0.2,0.3,0.4,,0.25\n"
    profiles = parse_profiles(io.StringIO(text))
    assert profiles[0].per_class_map == {"car": 0.6}
    assert profiles[1].per_class_map == {"3": 0.25}
    path = tmp_path / "p.csv"
    dump_profiles(profiles, path)
    assert load_profiles(path) == profiles


def test_coco_round_trip(tmp_path, write_json):
    anns = [
        {"id": 1, "image_id": 1, "category_id": 1, "bbox": [0.5, 0, 5, 5.25]},
        {"id": 2, "image_id": 2, "category_id": 2, "bbox": [1, 1, 5, 5], "iscrowd": 1},
    ]
    ds = load_ground_truth(write_json("gt.json", gt_doc(anns, images=(1, 2), categories=(1, 2))))
    dets = load_detections(write_json("d.json", [{"image_id": 2, "category_id": 1, "bbox": [1, 2, 3, 4],
                                                  "score": 0.75}]), ds)
    dump_ground_truth(ds, tmp_path / "gt2.json")
    dump_detections(dets, tmp_path / "d2.json")
    ds2 = load_ground_truth(tmp_path / "gt2.json")
    assert (ds2.images, ds2.categories, ds2.ground_truth) == (ds.images, ds.categories, ds.ground_truth)
    assert load_detections(tmp_path / "d2.json", ds2, "d").detections == dets.detections
