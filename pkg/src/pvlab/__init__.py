"""Monte Carlo toolkit for variance bounds of Poisson functionals."""
