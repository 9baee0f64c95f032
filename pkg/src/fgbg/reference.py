"""Published large-scale reference results for the four dataset roles.

These numbers come from the original ImageNet-scale experiments and ship
as fixtures: report formatting, directional sanity checks and the study
UI comparison view use them. They are NOT desk-scale reproduction targets.

All accuracies are (top-1, top-5) fractions.
"""

REFERENCE_TRAIN_SIZES = {
    "orig": 1_281_167,
    "fg": 544_539,
    "bg": 289_031,
    "hybrid": 1_281_167,
}

REFERENCE_TEST_SIZE = 50_000

# Each network evaluated on its own test set.
REFERENCE_SELF_ACCURACY = {
    "orig": (0.5819, 0.8096),
    "fg": (0.6082, 0.8343),
    "bg": (0.1441, 0.2962),
    "hybrid": (0.6129, 0.8385),
}

# Cross-evaluation matrix: (network, test set) -> (top1, top5).
REFERENCE_CROSS_EVAL = {
    ("orig", "orig"): (0.5819, 0.8096),
    ("orig", "fg"): (0.5073, 0.7411),
    ("orig", "bg"): (0.0383, 0.0911),
    ("fg", "orig"): (0.3342, 0.5372),
    ("fg", "fg"): (0.6082, 0.8343),
    ("fg", "bg"): (0.0144, 0.0453),
    ("bg", "orig"): (0.0426, 0.1073),
    ("bg", "fg"): (0.0169, 0.0534),
    ("bg", "bg"): (0.1441, 0.2962),
    ("hybrid", "orig"): (0.5289, 0.7661),
    ("hybrid", "fg"): (0.6129, 0.8385),
    ("hybrid", "bg"): (0.0348, 0.0905),
}

# 127-class (merged-category) accuracies: network vs human raters.
REFERENCE_MERGED = {
    "orig127": {"network": (0.7316, 0.9328), "human": None},
    "fg127": {"network": (0.7532, 0.9387), "human": (0.8125, 0.9583)},
    "bg127": {"network": (0.4165, 0.7379), "human": (0.1836, 0.3984)},
}

# Guided / unguided combination results: name -> {guided, unguided}.
REFERENCE_FUSION = {
    "orig": {"guided": (0.5819, 0.8096), "unguided": (0.5819, 0.8096)},
    "bg": {"guided": (0.1441, 0.2962), "unguided": (0.0830, 0.2060)},
    "fg": {"guided": (0.6082, 0.8343), "unguided": (0.4071, 0.6412)},
    "hybrid": {"guided": (0.6129, 0.8385), "unguided": (0.4558, 0.7022)},
    "fg+bg": {"guided": (0.6175, 0.8388), "unguided": (0.4183, 0.6532)},
    "hybrid+bg": {"guided": (0.6252, 0.8453), "unguided": (0.4808, 0.7269)},
    "hybrid+orig": {"guided": (0.6563, 0.8669), "unguided": (0.6036, 0.8247)},
}

# Dense-augmentation control: 100 patches instead of 10 on the orig net.
REFERENCE_ORIG100 = (0.5808, 0.8105)
REFERENCE_HYBRID_PLUS_ORIG100 = (0.6080, 0.8259)

# Top-100 proposals at IoU 0.7 recall about 81% of the validation boxes.
REFERENCE_PROPOSAL_RECALL_AT_100 = 0.81

# Large-scale training schedule the desk-scale budgets are derived from.
REFERENCE_SCHEDULE = {
    "iterations": 450_000,
    "decay_every": 100_000,
    "base_lr": 0.01,
    "momentum": 0.9,
    "weight_decay": 0.0005,
    "epochs_about": 90,
    "assumed_batch": 256,
}
