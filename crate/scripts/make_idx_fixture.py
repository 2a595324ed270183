"""Write a 100-record 28x28 IDX image/label pair with a closed-form byte pattern.

pixel byte (record r, offset k) = (131 * r + 17 * k + 3) mod 256
label (record r)                = r mod 10
"""
import struct
import sys
from pathlib import Path

RECORDS, ROWS, COLS = 100, 28, 28


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fixture-images.idx", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, RECORDS, ROWS, COLS))
        f.write(bytes((131 * r + 17 * k + 3) % 256
                      for r in range(RECORDS) for k in range(ROWS * COLS)))
    with open(out / "fixture-labels.idx", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, RECORDS))
        f.write(bytes(r % 10 for r in range(RECORDS)))


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "crates/core/tests/fixtures")
