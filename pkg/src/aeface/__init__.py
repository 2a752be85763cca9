"""Autoencoder-pretrained face embeddings with cosine-scored pair verification."""

__version__ = "0.1.0"
