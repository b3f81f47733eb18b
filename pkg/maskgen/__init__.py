# De-novo semantic mask generation
