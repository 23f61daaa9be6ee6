"""Tabular Q(lambda) learning on PCA-projected platformer states."""
