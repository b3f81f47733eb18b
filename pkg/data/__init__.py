# Data management layer
