# Dual-conditioned pixel-space diffusion
