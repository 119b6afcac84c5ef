"""Interactive segmentation with densely rasterized visual prompts."""

__version__ = "0.1.0"
