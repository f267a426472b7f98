"""Hofer lengths, translation numbers and Calabi quasimorphisms on the annulus.

The annulus is S^1 x (0, 1) with area form dtheta ^ dh and total area 1.
"""

from .calabi import (CalabiValue, EmbeddingSpec, SupportError, cal_j, cal_sphere_autonomous,
                     calabi_disk, rho, rho_report)
from .constructions import (ConstructionSpec, TransportCertificate, assemble_psi, build_hat_H,
                            build_plateau_K, build_psi_path, build_shear, build_spiral,
                            build_swap_flow, certify_psi, naive_rotation_baseline)
from .field import (AnnulusGrid, GeometryError, OrientationError, Region, ScalarField,
                    build_disk_region, integrate, region_area)
from .flow import (FlowError, FlowMap, HamiltonianPath, Segment, StepSizeError,
                   TranslationError, area_distortion, hamiltonian_vector_field, hofer_length,
                   integrate_flow, region_transport, translation_iterate, translation_winding)
from .reeb import MedianResult, ReebError, ReebGraph, SphereModel, build_reeb, find_median

__version__ = "0.1.0"
