"""care-export: turn a labeled image folder into consensus-pipeline inputs.

    care-export --images <dir> --classes <txt> --out <dir>
                [--model <id>] [--scale <f>] [--dim <n>] [--seed <n>]

The image folder holds one subdirectory per class name (the observed,
possibly wrong, annotation); the class file lists one name per line. Output
is a dataset directory in the pipeline's binary layout plus zeroshot.conf,
a confidence matrix usable as a file-backed expert.
"""

from __future__ import annotations

import argparse
import sys

from .encoders import LOCAL_MODEL
from .export import (ExportManifest, export_embeddings, read_class_names,
                     scan_image_folder)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="care-export", description=__doc__)
    p.add_argument("--images", required=True, help="folder of class subfolders")
    p.add_argument("--classes", required=True, help="text file of class names")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--model", default=LOCAL_MODEL,
                   help="encoder id; default is the weight-free local encoder")
    p.add_argument("--scale", type=float, default=25.0,
                   help="cosine-to-logit scale for the zero-shot confidences")
    p.add_argument("--dim", type=int, default=64,
                   help="embedding dimension (local encoder only)")
    p.add_argument("--seed", type=int, default=0,
                   help="projection seed (local encoder only)")
    p.add_argument("--prompt", default="a photo of a {}",
                   help="class-name prompt template for text encoders")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        class_names = read_class_names(args.classes)
        paths, labels = scan_image_folder(args.images, class_names)
        manifest = ExportManifest(image_paths=paths, labels=labels,
                                  class_names=class_names,
                                  model_id=args.model, out_dir=args.out)
        out = export_embeddings(manifest, scale=args.scale, dim=args.dim,
                                seed=args.seed, prompt=args.prompt)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(paths)} embeddings for {len(class_names)} classes "
          f"to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
