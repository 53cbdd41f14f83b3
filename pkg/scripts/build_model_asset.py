#!/usr/bin/env python3
"""Regenerate the versioned generic-model JSON asset from the authored layout.

Run from the repository root:

    python scripts/build_model_asset.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from orthoface.mesh import MODEL_ASSET, generate_generic_model, model_to_json


def main():
    model = generate_generic_model()
    out = pathlib.Path(__file__).resolve().parents[1] / "src" / "orthoface" / "assets" / MODEL_ASSET
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(model_to_json(model) + "\n")
    print(f"wrote {out} ({len(model.vertices)} vertices, {len(model.faces)} faces)")


if __name__ == "__main__":
    main()
