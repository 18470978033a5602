"""Annotation export bridge: real NLP toolchain output (or a builtin rule
pipeline) rendered into the ttlqa interchange format."""

__version__ = "0.1.0"

from .backends import BuiltinBackend, SpacyBackend, ToolchainUnavailable, get_backend
from .export import ExportResult, export_annotations
from .labelmap import NER_TAG_MAP, SRL_ROLE_MAP, map_entity_tag, map_srl_role

__all__ = [
    "BuiltinBackend", "SpacyBackend", "ToolchainUnavailable", "get_backend",
    "ExportResult", "export_annotations",
    "NER_TAG_MAP", "SRL_ROLE_MAP", "map_entity_tag", "map_srl_role",
]
