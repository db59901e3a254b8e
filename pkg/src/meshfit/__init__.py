"""Fit triangle meshes to target surfaces with sampled point-to-surface losses.

The package covers mesh geometry and graph operators, curvature-adaptive
face splitting, reparametrized surface sampling, exact point-triangle
distances, differentiable losses with hand-written gradients, a graph
convolutional mesh encoder, evaluation metrics and the optimization driver.
"""
from .errors import (ConfigError, DegenerateFaceError, DivergenceError, EmptyInputError,
                     MeshFitError, NoNeighborError, ParseError, PlanarityError,
                     ProvenanceError, ShapeError, UnsupportedFormatError, ZeroAreaError)
from .mesh import Mesh, cube, ico_sphere, square2d, tetrahedron, torus, triangle2d
from .io import load_obj, save_obj

__version__ = "0.1.0"
