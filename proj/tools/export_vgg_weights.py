#!/usr/bin/env python3
"""Convert torchvision VGG16/VGG19 weights into the carpet tensor archive.

    python3 tools/export_vgg_weights.py --out models/            # torchvision ImageNet weights
    python3 tools/export_vgg_weights.py --state-dict vgg16.pth --out models/

Writes encoder.json and encoder.bin; point MODEL_DIR or --model-dir at the
output directory. Only the convs up to conv5_1 are exported.
"""

import argparse
import json
import pathlib

import numpy as np
import torch
import torchvision

IMAGENET_MEAN = [0.485, 0.456, 0.406]
IMAGENET_STD = [0.229, 0.224, 0.225]


def build(arch, state_dict, random_init):
    ctor = getattr(torchvision.models, arch)
    if state_dict:
        model = ctor(weights=None)
        sd = torch.load(state_dict, map_location="cpu")
        model.load_state_dict(sd.get("state_dict", sd))
    elif random_init:
        torch.manual_seed(0)
        model = ctor(weights=None)
    else:
        model = ctor(weights="IMAGENET1K_V1")
    return model.eval()


def named_convs(features):
    block, index = 1, 0
    for module in features:
        if isinstance(module, torch.nn.Conv2d):
            index += 1
            yield f"conv{block}_{index}", module
            if block == 5:
                return
        elif isinstance(module, torch.nn.MaxPool2d):
            block, index = block + 1, 0


def export(model, arch, out_dir):
    out_dir.mkdir(parents=True, exist_ok=True)
    tensors, chunks, offset = [], [], 0
    for name, conv in named_convs(model.features):
        # [out, in, kh, kw] row-major is the layout the loader maps directly
        for key, value in ((f"{name}.weight", conv.weight), (f"{name}.bias", conv.bias)):
            data = value.detach().cpu().numpy().astype("<f4")
            tensors.append({"key": key, "layer": name, "shape": list(data.shape), "offset": offset})
            chunks.append(data.ravel())
            offset += data.size
    np.concatenate(chunks).tofile(out_dir / "encoder.bin")
    manifest = {
        "format": "carpet-tensors-v1",
        "dtype": "float32-le",
        "data": "encoder.bin",
        "metadata": {"architecture": arch, "input_mean": IMAGENET_MEAN, "input_std": IMAGENET_STD},
        "tensors": tensors,
    }
    (out_dir / "encoder.json").write_text(json.dumps(manifest, indent=2))
    return len(tensors) // 2


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--arch", choices=["vgg16", "vgg19"], default="vgg16")
    p.add_argument("--state-dict", help="local .pth file instead of downloading")
    p.add_argument("--random-init", action="store_true", help="seeded random weights, for format checks")
    p.add_argument("--out", required=True, type=pathlib.Path)
    args = p.parse_args()
    model = build(args.arch, args.state_dict, args.random_init)
    n = export(model, args.arch, args.out)
    print(f"wrote {n} convs to {args.out / 'encoder.json'}")


if __name__ == "__main__":
    main()
