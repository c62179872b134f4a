"""Second-order PML simulator for 3D elastic and Kelvin-Voigt waves in anisotropic media."""

from .config import SimulationConfig, load_and_validate, scenario_presets
from .diagnostics import (
    EnergyTrace,
    ReflectionReport,
    energy_decay_summary,
    measure_reflection,
    total_energy,
)
from .grid import FieldState, GridSpec, MaterialField, elastic_flux_divergence, history_gradient_term, mesh_size
from .materials import (
    Material,
    PlaneWaveProbe,
    StiffnessTensor,
    ViscosityTensor,
    christoffel_speeds,
    isotropic_stiffness,
    olivine,
    speed_bounds,
    voigt_expand,
)
from .pml import PmlProfile, beta0_from_reflection, beta_profile, build_coefficient_fields
from .solver import InstabilityError, RunReport, Solver, TimeStepper, run
from .sources import SourceSpec, apply_body_force, apply_dirichlet_shell, source_waveform

__version__ = "0.1.0"
