"""dermaug: synthetic-image augmentation and skin-type subgroup evaluation
for dermatology image classifiers."""

__version__ = "0.1.0"
