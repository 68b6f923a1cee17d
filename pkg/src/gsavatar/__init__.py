"""gsavatar: desk-scale expressive avatar engine.

Builds, fits, animates, and splat-renders a full-body avatar made of a
parametric head plus deformable body geometry layer and a UV-texel 3D
Gaussian appearance layer.
"""

__version__ = "0.1.0"
