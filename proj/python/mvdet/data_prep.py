"""Convert CIFAR-10 parquet files into the per-class PNG layout the toolkit
loads. The expected input is the Hugging Face ``uoft-cs/cifar10`` dataset
(columns: ``img`` with embedded PNG bytes, ``label``); any parquet with the
same schema works.

Usage:
    python -m mvdet.data_prep --train train.parquet --out data/cifar10 --per-class 800
"""

import argparse
import os

CIFAR10_CLASSES = [
    "airplane", "automobile", "bird", "cat", "deer",
    "dog", "frog", "horse", "ship", "truck",
]

PNG_MAGIC = bytes.fromhex("89504e470d0a1a0a")


def export_parquet(parquet_path, out_dir, per_class=0, prefix="", class_names=None):
    import pyarrow.parquet as pq

    table = pq.read_table(parquet_path)
    names = class_names or CIFAR10_CLASSES
    counts = {}
    written = 0
    for batch in table.to_batches():
        rows = batch.to_pylist()
        for i, row in enumerate(rows):
            label = int(row["label"])
            if per_class and counts.get(label, 0) >= per_class:
                continue
            cls = names[label] if label < len(names) else f"class_{label}"
            cls_dir = os.path.join(out_dir, cls)
            os.makedirs(cls_dir, exist_ok=True)
            idx = counts.get(label, 0)
            payload = row["img"]["bytes"] if isinstance(row["img"], dict) else row["img"]
            fname = os.path.join(cls_dir, f"{prefix}{idx:05d}.png")
            if payload[: len(PNG_MAGIC)] == PNG_MAGIC:
                with open(fname, "wb") as f:
                    f.write(payload)
            else:  # non-png payloads go through PIL
                import io

                from PIL import Image

                Image.open(io.BytesIO(payload)).convert("RGB").save(fname)
            counts[label] = idx + 1
            written += 1
        if per_class and counts and all(v >= per_class for v in counts.values()) \
                and len(counts) == len(names):
            break
    return written, counts


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train", required=True, help="train parquet path")
    ap.add_argument("--test", help="optional extra parquet merged into the same pool")
    ap.add_argument("--out", required=True, help="output dataset root")
    ap.add_argument("--per-class", type=int, default=800,
                    help="images kept per class from --train (0 = all)")
    ap.add_argument("--per-class-test", type=int, default=0,
                    help="extra images per class from --test (0 = none)")
    args = ap.parse_args(argv)

    n, counts = export_parquet(args.train, args.out, args.per_class)
    print(f"wrote {n} images from {args.train} -> {args.out}")
    if args.test and args.per_class_test:
        n2, _ = export_parquet(args.test, args.out, args.per_class_test, prefix="t")
        print(f"wrote {n2} images from {args.test}")
    print("per-class counts:", dict(sorted(counts.items())))


if __name__ == "__main__":
    main()
