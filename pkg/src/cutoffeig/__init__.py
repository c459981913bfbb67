"""Neural eigensolver for Dirichlet Schrodinger operators."""
