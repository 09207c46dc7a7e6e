"""Susceptibility distortion correction of reversed-PE EPI pairs by 1D optimal transport."""
from .volume import Volume, EpiPair, extract_column, auto_mask, plane_axes, DegenerateInputError
from .ot1d import (TransportMap, ColumnDisplacement, normalize_profile, transport_map,
                   barycentric_displacement, column_field)
from .spectral import DisplacementField, bending_filter, regularize_field
from .morozov import NoiseEstimate, MorozovResult, estimate_noise, discrepancy, select_lambda
from .unwarp import CorrectionResult, pe_gradient, apply_correction
from .phantom import PhantomSpec, make_phantom, distort, make_pair
from .pipeline import correct

__version__ = "0.1.0"
