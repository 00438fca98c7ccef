"""Transmission eigenvalues with BFS elements and a multigrid correction scheme."""
from .assembly import ConditionC1Error, FormMatrices, RefractionField, assemble_forms
from .bfs import FeSpace, ProductLayout, build_space, interpolate, prolongation
from .mesh import Domain, RectMesh, build_mesh, mesh_size, refine_uniform
from .multigrid import (LevelState, MultigridConfig, MultigridError, direct_solve,
                        run_multigrid)
from .report import (ConfigError, ReportBundle, RunConfig, convergence_order, emit_outputs,
                     parse_config, run_experiment)

__all__ = [
    "ConditionC1Error", "FormMatrices", "RefractionField", "assemble_forms",
    "FeSpace", "ProductLayout", "build_space", "interpolate", "prolongation",
    "Domain", "RectMesh", "build_mesh", "mesh_size", "refine_uniform",
    "LevelState", "MultigridConfig", "MultigridError", "direct_solve", "run_multigrid",
    "ConfigError", "ReportBundle", "RunConfig", "convergence_order", "emit_outputs",
    "parse_config", "run_experiment",
]
__version__ = "0.1.0"
