"""Toolchain for the ShapeAssembly cuboid-structure language.

Parse, validate and execute programs (with exact attachment and macro
semantics and hierarchy), differentiate execution with respect to continuous
parameters, extract canonical programs from hierarchical part graphs, fit
program parameters to point clouds, and score shapes for physical validity
and editability.
"""

from .autodiff import (DiffScalar, FiniteDiffResult, Tape, finite_diff_check,
                       gradient, lift)
from .cloud import (PointCloud, chamfer_distance, default_f_threshold,
                    export_obj, f_score, load_points, sample_surface,
                    sample_volume_grid, save_points)
from .errors import (ContractError, ExecutionError, ExtractionError, FitError,
                     ParseError, ShapeAssemblyError, SingularityError)
from .geometry import (CuboidGeom, Mat3, RigidPose, Vec3, local_to_world,
                       point_in_cuboid, world_to_local)
from .interp import (ExecutedShape, Violation, check_semantics, execute,
                     expand_program, expand_squeeze)
from .lang import (Attach, CuboidDecl, Program, Reflect, Squeeze, Translate,
                   parse, print_program, program_stats, programs_equal,
                   structural_signature, token_edit_distance)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
