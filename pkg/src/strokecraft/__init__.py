"""Prior-regularized diffusion and Bezier brushstroke painting, desk scale."""

__version__ = "0.1.0"
