# Exact kernels: linear algebra, walks, progressions, discretization, random matrices and file formats
