#!/usr/bin/env python3
"""Regenerates the bundled demo fixtures under fixtures/."""
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "fixtures")

rng = random.Random(20240817)

NOUNS = [
    "cat", "dog", "bicycle", "car", "bench", "tree", "lamp", "boat",
    "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "bird",
    "backpack", "umbrella", "handbag", "tie", "suitcase", "frisbee", "skis", "kite",
    "bottle", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple",
    "sandwich", "orange", "broccoli", "carrot", "pizza", "donut", "cake", "chair",
    "sofa", "plant", "bed", "table", "toilet", "television", "laptop", "mouse",
    "remote", "keyboard", "phone", "microwave", "oven", "toaster", "sink", "fridge",
    "book", "clock", "vase", "scissors", "teddy bear", "hairdryer", "toothbrush", "fire hydrant",
]

ADJ = ["red", "small", "weathered", "bright", "old", "shiny", "wooden", "striped"]
PLACES = ["on the street", "near the window", "in the park", "by the river",
          "under a tree", "on a table", "next to a fence", "in the background"]
COLORS = ["left", "right", "upper", "lower"]


def detailed_caption(objs):
    parts = []
    for o in objs:
        parts.append("a %s %s %s" % (rng.choice(ADJ), o, rng.choice(PLACES)))
    return ("The scene shows " + ", and ".join(parts) +
            ". The lighting is %s and the composition places the main subject %s of the frame."
            % (rng.choice(["soft", "harsh", "warm", "dim"]),
               rng.choice(["to the left", "to the right", "at the center"])))


def brief_caption(objs):
    return "a %s with a %s" % (objs[0], objs[1]) if len(objs) > 1 else "a %s" % objs[0]


def main():
    os.makedirs(OUT, exist_ok=True)

    # --- image-level pools -------------------------------------------------
    detailed, brief = [], []
    img_objects = {}
    for i in range(64):
        image_id = "img%03d" % i
        objs = rng.sample(NOUNS, 3)
        img_objects[image_id] = objs
        detailed.append({
            "image_id": image_id,
            "image_path": "images/%s.jpg" % image_id,
            "caption": detailed_caption(objs),
            "region": None,
            "counterpart_image_id": None,
        })
        brief.append({
            "image_id": image_id,
            "image_path": "images/%s.jpg" % image_id,
            "caption": brief_caption(objs),
            "region": None,
            "counterpart_image_id": None,
        })
    with open(os.path.join(OUT, "pool_detailed.jsonl"), "w") as f:
        for e in detailed:
            f.write(json.dumps(e) + "\n")
    with open(os.path.join(OUT, "pool_brief.jsonl"), "w") as f:
        for e in brief:
            f.write(json.dumps(e) + "\n")

    # --- region pool: 16 images x 4 disjoint grid cells ---------------------
    region = []
    for i in range(16):
        image_id = "reg%03d" % i
        for gx in range(2):
            for gy in range(2):
                kind = rng.choice(["bbox", "bbox", "point"])
                if kind == "bbox":
                    reg = {"kind": "bbox", "x": gx * 0.5 + 0.02, "y": gy * 0.5 + 0.02,
                           "w": 0.42, "h": 0.42}
                else:
                    reg = {"kind": "point", "x": gx * 0.5 + 0.2, "y": gy * 0.5 + 0.2,
                           "w": 0.0, "h": 0.0}
                obj = rng.choice(NOUNS)
                region.append({
                    "image_id": image_id,
                    "image_path": "images/%s.jpg" % image_id,
                    "caption": "a %s %s in the %s %s part of the image"
                               % (rng.choice(ADJ), obj, COLORS[gy * 2], COLORS[2 + (gy % 2)]),
                    "region": reg,
                    "counterpart_image_id": None,
                })
    with open(os.path.join(OUT, "pool_region.jsonl"), "w") as f:
        for e in region:
            f.write(json.dumps(e) + "\n")

    # --- contrastive pool: 12 counterfactual couples ------------------------
    contrast = []
    for i in range(12):
        a = "mvc%03da" % i
        b = "mvc%03db" % i
        obj = rng.choice(NOUNS)
        for src, dst, side in ((a, b, "left"), (b, a, "right")):
            contrast.append({
                "image_id": src,
                "image_path": "images/%s.jpg" % src,
                "caption": "the %s is on the %s side of the frame" % (obj, side),
                "region": None,
                "counterpart_image_id": dst,
            })
    with open(os.path.join(OUT, "pool_contrastive.jsonl"), "w") as f:
        for e in contrast:
            f.write(json.dumps(e) + "\n")

    # --- demo lexicon --------------------------------------------------------
    lexicon = {
        "objects": NOUNS,
        "synonyms": {
            "kitty": "cat", "puppy": "dog", "bike": "bicycle", "automobile": "car",
            "couch": "sofa", "tv": "television", "cellphone": "phone",
            "refrigerator": "fridge", "pot plant": "plant", "hydrant": "fire hydrant",
        },
        "cog_targets": ["ghost", "person", "shadow", "reflection", "dragon", "unicorn"],
    }
    with open(os.path.join(OUT, "lexicon.json"), "w") as f:
        json.dump(lexicon, f, indent=2)
        f.write("\n")

    # --- eval fixtures: 4-image sequences with pairwise-disjoint objects -----
    gt_lines, perfect, swapped, truncated, empty = [], [], [], [], []
    for s in range(8):
        ids = rng.sample(list(img_objects), 4)
        # force pairwise-disjoint object sets
        used = set()
        images = []
        for image_id in ids:
            objs = [o for o in img_objects[image_id] if o not in used][:2]
            if len(objs) < 2:
                objs = (objs + [o for o in NOUNS if o not in used])[:2]
            used.update(objs)
            images.append({"image_id": image_id, "objects": objs,
                           "caption": "a %s and a %s" % (objs[0], objs[1])})
        seq_id = "ctxamber-%02d" % s
        gt_lines.append({"seq_id": seq_id, "images": images})

        caps = [img["caption"] for img in images]
        fmt = lambda cs: " ".join("For Image %d: %s." % (i + 1, c)
                                  for i, c in enumerate(cs))
        perfect.append({"seq_id": seq_id, "text": fmt(caps)})
        rotated = caps[1:] + caps[:1]
        swapped.append({"seq_id": seq_id, "text": fmt(rotated)})
        truncated.append({"seq_id": seq_id, "text": " ".join(
            "For Image %d: %s." % (i + 1, c) for i, c in enumerate(caps[:3]))})
        empty.append({"seq_id": seq_id, "text": ""})

    for name, rows in (("eval_gt.jsonl", gt_lines), ("pred_perfect.jsonl", perfect),
                       ("pred_swapped.jsonl", swapped), ("pred_truncated.jsonl", truncated),
                       ("pred_empty.jsonl", empty)):
        with open(os.path.join(OUT, name), "w") as f:
            for r in rows:
                f.write(json.dumps(r) + "\n")

    # --- generation config ----------------------------------------------------
    with open(os.path.join(OUT, "gen_config.txt"), "w") as f:
        f.write("""# demo generation config
master_seed = 42
pools.detailed = fixtures/pool_detailed.jsonl
pools.brief = fixtures/pool_brief.jsonl
pools.region = fixtures/pool_region.jsonl
pools.contrastive = fixtures/pool_contrastive.jsonl
out = pairs.jsonl
context.count = 40
needle_t.count = 20
needle_v.count = 7
context.n_range = 2,5
needle.n_range = 2,4
context.perturb_weights = 1,1,1
needle.max_iou = 0
""")

    print("fixtures written to", OUT)


if __name__ == "__main__":
    main()
