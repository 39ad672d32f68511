"""ChimeraMix: mask-guided feature mixing for small-data image classification.

The package is organized around the pipeline stages:

- :mod:`chimeramix.data` — dataset containers, loaders, per-class
  subsampling, same-class pair sampling.
- :mod:`chimeramix.segmentation` — graph-based (Felzenszwalb-style) image
  segmentation and the segmentation cache.
- :mod:`chimeramix.masks` — grid / segmentation / constant mixing masks.
- :mod:`chimeramix.model` — mixing generator (encoder, feature mixer,
  decoder) and patch discriminator.
- :mod:`chimeramix.losses` — reconstruction, Laplacian-pyramid perceptual,
  and least-squares adversarial losses.
- :mod:`chimeramix.training` — generator/discriminator training and
  classifier training with stochastic batch replacement.
- :mod:`chimeramix.evaluation` — FID, accuracy, and direct pixel-mixing
  ablations.
- :mod:`chimeramix.cli` — command-line entry points.
"""

__version__ = "0.1.0"
