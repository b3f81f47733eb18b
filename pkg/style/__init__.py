# Texture descriptors and context selection
