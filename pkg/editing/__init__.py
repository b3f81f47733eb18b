# Mask editing commands and gradient-domain blending
