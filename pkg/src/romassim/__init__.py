"""romassim: data-driven bias correction for coupled reactor transients.

Library layout
--------------
fields        structured meshes, scalar fields, L^1/L^2 machinery
sensing       Gaussian-kernel sensor functionals and synthetic measurements
reduction     POD and POD-with-interpolation surrogates
geim          generalised empirical interpolation, plain and regularised
pbdw          parameterised-background data-weak estimation and SGreedy
neutronics    two-group diffusion: k-eigenvalue and transient stepping
thermal       heat conduction with the fission power density
multiphysics  coupling laws, schedules, fom/afom/lcfom drivers
harness       benchmarks, metrics, persistence, reports, CLI
"""

from . import errors
from .fields import (BoundaryTag, ScalarField, StructuredMesh, build_mesh,
                     constant_field, inner_product, read_region_mask,
                     reduce_field)
from .sensing import (SensorFunctional, apply_functional,
                      build_sensor_library, export_measurements, make_sensor,
                      riesz_representation, synthesize_measurements)
from .reduction import (PodBasis, PodiModel, SnapshotSet, compute_pod,
                        pod_project, pod_reconstruct, podi_eval, podi_train)
from .geim import (GeimModel, coefficient_stats, geim_greedy, geim_online,
                   geim_online_batch, trgeim_online)
from .pbdw import (PbdwModel, background_update_model, default_xi_grid,
                   inf_sup, pbdw_online, pbdw_online_batch, sgreedy, tune_xi)
from .neutronics import (CellMaterials, MaterialTable, NeutronicState,
                         RegionNuclear, advance_neutronics,
                         assemble_group_operator, expand_materials,
                         solve_keff)
from .thermal import (RegionThermal, ThermalProperties, advance_heat,
                      expand_thermal, power_density)
from .multiphysics import (CoupledProblem, CouplingLaw, ScheduleEntry,
                           TransientSchedule, coupling_eval,
                           fit_linear_coupling, run_transient,
                           transient_factor)

__version__ = "0.1.0"
