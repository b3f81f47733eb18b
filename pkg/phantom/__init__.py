# Procedural ultrasound phantoms
