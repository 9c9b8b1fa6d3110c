"""GAN-based augmentation of scarce attack classes in flow-feature IDS datasets."""

__version__ = "0.1.0"
