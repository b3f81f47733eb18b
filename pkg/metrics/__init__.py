# Segmentation agreement and synthetic-image quality metrics
