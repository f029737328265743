"""Symbolic and numeric classification of Ricci tensor conditions on explicit metrics."""

__version__ = "0.1.0"

from .dsl import ManifoldSpec, parse_manifold, pretty_print, validate_spec  # noqa: E402
from .sampling import SamplingConfig  # noqa: E402
from .tensors import CurvaturePack  # noqa: E402
from .classical import ClassicalPack  # noqa: E402
from .conditions import ConditionReport  # noqa: E402
from .report import ReportDocument, classify, emit_report, parse_report, run_condition  # noqa: E402
from .corpus import instantiate_family, list_families, verify_family  # noqa: E402
from .ode import fd_curvature_oracle, get_system, integrate_rif_system, verify_numeric_metric  # noqa: E402

__all__ = [
    "__version__", "ManifoldSpec", "parse_manifold", "pretty_print", "validate_spec",
    "SamplingConfig", "CurvaturePack", "ClassicalPack", "ConditionReport", "ReportDocument",
    "classify", "emit_report", "parse_report", "run_condition", "instantiate_family",
    "list_families", "verify_family", "fd_curvature_oracle", "get_system",
    "integrate_rif_system", "verify_numeric_metric",
]
