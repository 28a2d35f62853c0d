"""vqplan: discrete-latent world models planned over with tree search.

The package learns vector-quantized autoencoders and unrolled transition
models from logged trajectories, then plans with a Monte Carlo tree
search that branches over both agent actions and environment latent
codes.
"""

__version__ = "0.1.0"
