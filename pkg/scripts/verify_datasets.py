import argparse
import json
import sys
from pathlib import Path

# Ensure project root is on sys.path when running this file directly
PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from app.config import settings
from app.errors import DatasetFormatError
from app.services.datasets import (
    CIFAR_TEST,
    CIFAR_TRAIN,
    MNIST_FILES,
    dataset_dir,
    read_cifar_batch,
    read_idx_images,
    read_idx_labels,
    sha256_file,
)


def _expected(name):
    if name == "mnist":
        return [(f, read_idx_images if "images" in key else read_idx_labels) for key, f in MNIST_FILES.items()]
    return [(f, lambda p: read_cifar_batch(p)[0]) for f in CIFAR_TRAIN + CIFAR_TEST]


def verify_datasets(root, names, checksums=None):
    """
    Checks every dataset file under `root` and prints one line per file.

    - MISSING: neither the plain nor the .gz file exists.
    - BAD: the file does not parse (bad magic, bad length).
    - MISMATCH: the SHA-256 differs from the one in `checksums`.
    - OK: parsed, with its record count and SHA-256.

    Returns the number of files that are not OK.
    """
    failures = 0
    for name in names:
        folder = dataset_dir(name, root)
        for fname, reader in _expected(name):
            path = next((c for c in (folder / fname, folder / f"{fname}.gz") if c.is_file()), None)
            if path is None:
                print(f"MISSING  {name}/{fname}")
                failures += 1
                continue
            try:
                records = len(reader(path))
            except DatasetFormatError as e:
                print(f"BAD      {name}/{path.name}: {e}")
                failures += 1
                continue
            digest = sha256_file(path)
            want = (checksums or {}).get(path.name)
            if want and want != digest:
                print(f"MISMATCH {name}/{path.name}: sha256 {digest} (expected {want})")
                failures += 1
                continue
            print(f"OK       {name}/{path.name}: {records} records sha256 {digest}")
    return failures


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Check the dataset files under the data root.")
    parser.add_argument("--root", default=settings.data_root)
    parser.add_argument("--dataset", choices=["mnist", "cifar10"], action="append")
    parser.add_argument("--checksums", help="JSON object mapping file name to expected sha256")
    args = parser.parse_args()
    expected = json.loads(Path(args.checksums).read_text(encoding="utf-8")) if args.checksums else None
    bad = verify_datasets(args.root, args.dataset or ["mnist", "cifar10"], expected)
    sys.exit(1 if bad else 0)
