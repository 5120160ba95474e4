"""Export real-model activations and head parameters into scoring bundles."""

from .bundle_io import write_bundle_dir
from .errors import (
    ExportError,
    IoError,
    ModelLoadError,
    SpecError,
    TemplateError,
    TokenizationError,
)
from .export import (
    ExportReport,
    export_bundle,
    label_lead,
    load_model,
    query_context,
    render_demo,
    resolve_candidates,
)
from .spec import ExportSpec, spec_from_dict, spec_from_json

__version__ = "0.1.0"

__all__ = [
    "ExportError",
    "ExportReport",
    "ExportSpec",
    "IoError",
    "ModelLoadError",
    "SpecError",
    "TemplateError",
    "TokenizationError",
    "export_bundle",
    "label_lead",
    "load_model",
    "query_context",
    "render_demo",
    "resolve_candidates",
    "spec_from_dict",
    "spec_from_json",
    "write_bundle_dir",
]
