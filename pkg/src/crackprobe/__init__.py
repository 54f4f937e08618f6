"""Vision-guided tactile crack exploration: segmentation, skeleton graphs, scan
planning, tactile trace simulation, spectral features, a random forest and
crack geometry estimation."""

__version__ = "0.1.0"
