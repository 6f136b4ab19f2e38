#!/usr/bin/env python3
"""Download the four FashionMNIST IDX files needed by the fashion_mnist
dataset kind and the matching acceptance test.

Usage:
    python scripts/fetch_fashion_mnist.py [target_dir]

target_dir defaults to data/fashion-mnist. Files are verified against
the published MD5 sums; pass --no-verify to skip verification.
"""

import argparse
import hashlib
import sys
import urllib.error
import urllib.request
from pathlib import Path

MIRRORS = [
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    "https://storage.googleapis.com/tensorflow/tf-keras-datasets/",
]

FILES = {
    "train-images-idx3-ubyte.gz": "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
    "train-labels-idx1-ubyte.gz": "25c81989df183df01b3e8a0aad5dffbe",
    "t10k-images-idx3-ubyte.gz": "bef4ecab320f06d8554ea6380940ec79",
    "t10k-labels-idx1-ubyte.gz": "bb300cfdad3c16e7a12a480ee83cd310",
}


def fetch(name: str, target: Path, verify: bool) -> bool:
    dest = target / name
    if dest.exists():
        print(f"{name}: already present")
        return True
    for mirror in MIRRORS:
        url = mirror + name
        try:
            print(f"{name}: downloading from {url}")
            with urllib.request.urlopen(url, timeout=60) as response:
                blob = response.read()
        except (urllib.error.URLError, OSError) as exc:
            print(f"  failed: {exc}")
            continue
        if verify:
            digest = hashlib.md5(blob).hexdigest()
            if digest != FILES[name]:
                print(f"  checksum mismatch: expected {FILES[name]}, got {digest}")
                continue
        dest.write_bytes(blob)
        print(f"  saved {len(blob)} bytes to {dest}")
        return True
    return False


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("target", nargs="?", default="data/fashion-mnist")
    parser.add_argument("--no-verify", action="store_true", help="skip MD5 verification")
    args = parser.parse_args()

    target = Path(args.target)
    target.mkdir(parents=True, exist_ok=True)
    ok = all(fetch(name, target, not args.no_verify) for name in FILES)
    if not ok:
        print(
            "\nsome files could not be downloaded; place them manually under "
            f"{target} (gzipped or raw IDX both work)",
            file=sys.stderr,
        )
        return 1
    print(f"\nall files ready under {target}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
