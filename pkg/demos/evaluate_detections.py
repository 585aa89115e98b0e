"""Score a handful of detections against ground truth.

    python demos/evaluate_detections.py

One detection misses its box, so class 1 loses some precision. Class 2 is
found exactly. The mean over both classes is 11/12.
"""

from synthdet.metrics import evaluate

gt = {"images": [{"id": 1}, {"id": 2}], "categories": [{"id": 1}, {"id": 2}],
      "annotations": [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10]},
                      {"image_id": 2, "category_id": 1, "bbox": [20, 20, 10, 10]},
                      {"image_id": 1, "category_id": 2, "bbox": [50, 50, 5, 5]}]}
pred = [{"image_id": 1, "category_id": 1, "bbox": [0, 0, 10, 10], "score": 0.9},
        {"image_id": 2, "category_id": 1, "bbox": [60, 60, 10, 10], "score": 0.8},
        {"image_id": 2, "category_id": 1, "bbox": [20, 20, 10, 10], "score": 0.7},
        {"image_id": 1, "category_id": 2, "bbox": [50, 50, 5, 5], "score": 0.6}]

res = evaluate(pred, gt)
for cid, ap in res.per_class.items():
    print(f"class {cid}: AP {ap:.4f}")
print(f"mAP@0.5 {res.mAP:.4f}")
