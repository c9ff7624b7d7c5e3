"""Few-label static image action recognition helped by unlabeled video."""

__version__ = "0.1.0"
