"""xtaltext: desk-scale contrastive crystal-text pretraining."""

__version__ = "0.1.0"
