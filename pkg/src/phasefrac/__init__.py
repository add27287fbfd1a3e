"""Phase-field fracture in 2-D plane strain with quasi-Newton monolithic,
single-pass staggered, fatigue and implicit-dynamics drivers."""

from .bfgs import BfgsOperator, bfgs_apply_inverse
from .convergence import (
    ConvergenceVerdict,
    FieldStats,
    FluxHistory,
    check_convergence,
)
from .dynamics import (
    TractionLoad,
    backward_euler_kinematics,
    build_traction_vector,
    rayleigh_wave_speed,
    run_dynamic_program,
)
from .elements import (
    ElementContribution,
    element_residual_and_tangent,
    gauss_rule,
    kinematics,
    shape_eval,
)
from .fatigue import (
    CyclicProgram,
    FatigueParams,
    accumulate_fatigue,
    crack_length,
    fatigue_degradation,
    run_cyclic_program,
)
from .materials import MaterialParams
from .mesh import (
    DirichletSpec,
    Mesh,
    MeshError,
    NotchSpec,
    generate_structured_quad_mesh,
    prescribe_initial_crack,
    resolve_boundary_set,
)
from .mesh_io import read_mesh, write_mesh
from .solvers import (
    FractureProblem,
    IncrementController,
    LoadProgram,
    NonConvergenceError,
    RunLog,
    SolverConfig,
    adaptive_step_check,
    run_load_program,
    solve_increment_monolithic,
    solve_increment_staggered,
)
from .splits import SplitResult, split_energy, update_history
from .system import (
    Assembler,
    DofMap,
    SolutionState,
    SparseSystem,
    assemble,
    build_dof_map,
    solve_linear,
)

__version__ = "0.1.0"
