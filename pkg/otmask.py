#!/usr/bin/env python3
"""
otmask: panoptic pseudo-masks from point annotations
=====================================================

Entry point.  Checks that the numeric stack is installed and hands the
command line to ``otmask.cli.main``.

Usage:
    python otmask.py synth --spec scene.txt --seed 0 --out fixtures/scene
    python otmask.py generate fixtures/scene --out runs/generate
    python otmask.py compare fixtures/suite/* --out runs/compare --jobs 4
    python otmask.py evaluate --pred runs/generate/scene/pseudo_mask.pgm --gt fixtures/scene/gt_mask.pgm --out eval.json
    python otmask.py losses fixtures/scene --out losses.json
    python otmask.py sweep fixtures/suite/* --param beta --values 0,0.1,0.5 --out sweep.json

Add ``--debug-on`` to any subcommand for verbose logging.
"""

import sys

try:
    import numpy  # noqa: F401  availability check
    import ot  # noqa: F401
    import scipy  # noqa: F401
    import skimage  # noqa: F401
except ImportError as exc:
    print(f"ERROR: {exc.name} not found")
    print("Install with: pip install -r requirements.txt")
    sys.exit(1)

from otmask.cli.main import main

if __name__ == "__main__":
    main()
