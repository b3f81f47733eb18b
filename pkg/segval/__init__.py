# Downstream segmentation experiment (real vs real + synthetic)
