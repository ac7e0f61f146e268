#!/usr/bin/env python3
"""Convert the digit arrays shipped in the npm `mnist` package into IDX files.

The package bundles roughly 10k real MNIST digits as pixel/255 values rounded
to three decimals. Bytes are recovered with round(v * 255). Digits are
interleaved round-robin by class so that any prefix is roughly balanced.

usage: mnist_npm_to_idx.py <path/to/package/dist/mnist.js> <out_dir>
"""
import os
import re
import struct
import sys


def main():
    src, out = sys.argv[1], sys.argv[2]
    text = open(src).read()
    mapping = dict(
        (int(d), int(m)) for d, m in re.findall(r'"\./digits/(\d)\.json":(\d+)', text)
    )
    modules = {}
    for m in re.finditer(r'(\d+):\[function\(require,module,exports\)\{\s*module\.exports=\{ "data": \[([^\]]*)\]', text):
        modules[int(m.group(1))] = m.group(2)
    per_digit = []
    for digit in range(10):
        vals = [float(v) for v in modules[mapping[digit]].split(",")]
        count = len(vals) // 784
        imgs = [
            bytes(int(round(v * 255)) for v in vals[i * 784:(i + 1) * 784])
            for i in range(count)
        ]
        per_digit.append(imgs)
    images, labels = [], []
    k = 0
    while any(k < len(d) for d in per_digit):
        for digit, imgs in enumerate(per_digit):
            if k < len(imgs):
                images.append(imgs[k])
                labels.append(digit)
        k += 1
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "train-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(images), 28, 28))
        for img in images:
            f.write(img)
    with open(os.path.join(out, "train-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {out}")


if __name__ == "__main__":
    main()
