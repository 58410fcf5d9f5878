#!/usr/bin/env python3
"""Export pretrained torchvision classifiers to safetensors files readable by gfi."""
import argparse
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torchvision.models as tvm

MODELS = {
    "vgg19": lambda: tvm.vgg19(weights=tvm.VGG19_Weights.IMAGENET1K_V1),
    "alexnet": lambda: tvm.alexnet(weights=tvm.AlexNet_Weights.IMAGENET1K_V1),
    "resnet18": lambda: tvm.resnet18(weights=tvm.ResNet18_Weights.IMAGENET1K_V1),
}


def write_safetensors(path, tensors):
    header, blobs, offset = {}, [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        header[name] = {"dtype": "F32", "shape": list(arr.shape),
                        "data_offsets": [offset, offset + arr.nbytes]}
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    raw = json.dumps(header, separators=(",", ":")).encode()
    raw += b" " * (-len(raw) % 8)
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(raw)))
        f.write(raw)
        for b in blobs:
            f.write(b)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("arch", choices=sorted(MODELS))
    ap.add_argument("-o", "--out-dir", default="data")
    args = ap.parse_args()
    model = MODELS[args.arch]().eval()
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()
             if v.dtype.is_floating_point}
    out = Path(args.out_dir) / f"{args.arch}.safetensors"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_safetensors(out, state)
    print(f"wrote {out} ({len(state)} tensors)")


if __name__ == "__main__":
    with torch.no_grad():
        main()
