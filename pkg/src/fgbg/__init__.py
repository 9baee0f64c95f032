"""Figure-ground ablation lab.

Builds foreground-only / background-only / hybrid image datasets from box
annotations, trains a small convolutional network on each variant, and runs
the full evaluation battery: cross-evaluation, foreground-ratio diagnostics,
patch visualization, guided/unguided late fusion over object proposals, and
a human-recognition study service.

Heavy submodules (numpy, PIL) are imported on demand so that the CLI can
configure thread limits before numerical libraries load.
"""

__version__ = "0.1.0"
