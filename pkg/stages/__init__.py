# Pipeline stage layer
