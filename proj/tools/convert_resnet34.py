"""Write ResNet34 ImageNet weights as a plain dict of tensors for vocseg.

usage:
  convert_resnet34.py SRC.pth OUT.pt     convert a saved torchvision state dict
  convert_resnet34.py --download OUT.pt  fetch the torchvision IMAGENET1K_V1 weights first

The C++ loader reads plain dicts only; torchvision state dicts are
OrderedDicts, hence this step. The fc.* entries are dropped.
"""
import argparse

import torch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src", nargs="?", help="torchvision resnet34 state dict (.pth)")
    ap.add_argument("out")
    ap.add_argument("--download", action="store_true")
    args = ap.parse_args()

    if args.download:
        import torchvision

        state = torchvision.models.resnet34(weights=torchvision.models.ResNet34_Weights.IMAGENET1K_V1).state_dict()
    elif args.src:
        state = torch.load(args.src, map_location="cpu")
        if "state_dict" in state:
            state = state["state_dict"]
    else:
        ap.error("give SRC or --download")

    plain = {k: v.detach().clone().contiguous() for k, v in state.items() if not k.startswith("fc.")}
    if len(plain) == 0 or "layer4.2.bn2.running_var" not in plain:
        raise SystemExit("not a resnet34 state dict")
    torch.save(plain, args.out)
    print(f"wrote {len(plain)} tensors to {args.out}")


if __name__ == "__main__":
    main()
