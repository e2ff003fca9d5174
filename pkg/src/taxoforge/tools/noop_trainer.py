"""Stand-in training command with the retrain-style interface.

Writes the sorted category names to --output_labels and an empty graph
file to --output_graph, then exits 0.
"""

import argparse
import os
import sys


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--image_dir", required=True)
    ap.add_argument("--output_graph", required=True)
    ap.add_argument("--output_labels", required=True)
    args, _ = ap.parse_known_args(argv)
    labels = sorted(
        e.name for e in os.scandir(args.image_dir) if e.is_dir() and not e.name.startswith(".")
    )
    with open(args.output_labels, "w", encoding="utf-8") as fh:
        fh.write("".join(f"{lab}\n" for lab in labels))
    open(args.output_graph, "wb").close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
