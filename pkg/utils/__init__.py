# Seed derivation and shared network blocks
