#!/usr/bin/env python3
"""Export torchvision ImageNet backbones as plain state dicts for `lungct`.

The classifier layers (classifier / fc / AuxLogits) are dropped; the remaining
tensor names match the C++ trunks one-to-one. Point the `weights_path` config
key at the produced file.

    python3 tools/export_torchvision_weights.py densenet201 weights/densenet201.pt
    python3 tools/export_torchvision_weights.py inceptionv3 weights/inceptionv3.pt --random
"""

import argparse
import sys

import torch
import torchvision

BUILDERS = {
    "vgg16": (torchvision.models.vgg16, "VGG16_Weights"),
    "vgg19": (torchvision.models.vgg19, "VGG19_Weights"),
    "inceptionv3": (torchvision.models.inception_v3, "Inception_V3_Weights"),
    "densenet201": (torchvision.models.densenet201, "DenseNet201_Weights"),
}
DROPPED_PREFIXES = ("classifier.", "fc.", "AuxLogits.")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("backbone", choices=sorted(BUILDERS))
    parser.add_argument("output")
    parser.add_argument("--random", action="store_true", help="export randomly initialised weights (no download)")
    args = parser.parse_args()

    build, weights_enum = BUILDERS[args.backbone]
    kwargs = {}
    if args.backbone == "inceptionv3":
        kwargs["aux_logits"] = args.random is False
        kwargs["init_weights"] = False
    weights = None if args.random else getattr(torchvision.models, weights_enum).IMAGENET1K_V1
    model = build(weights=weights, **kwargs)
    state = {k: v.contiguous() for k, v in model.state_dict().items() if not k.startswith(DROPPED_PREFIXES)}
    torch.save(state, args.output)
    print(f"wrote {len(state)} tensors to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
