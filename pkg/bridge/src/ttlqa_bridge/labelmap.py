"""Mapping from toolchain tag inventories onto the interchange label sets.

The interchange format restricts entities to five categories and SRL
arguments to five roles.  The map is total: any tag outside the inventory
falls back to THING (entities) or is dropped (roles), each with a logged
warning, so exporters never emit labels the downstream validator rejects.
"""

from __future__ import annotations

import logging

logger = logging.getLogger(__name__)

ENTITY_LABELS = ("PERSON", "LOCATION", "TEMPORAL", "NUMERIC", "THING")
SRL_ROLES = ("ARG0", "ARG1", "ARG2", "ARGM-LOC", "ARGM-TMP")

# spaCy-style NER tag inventory -> interchange category.
NER_TAG_MAP = {
    "PERSON": "PERSON",
    "PER": "PERSON",
    "GPE": "LOCATION",
    "LOC": "LOCATION",
    "FAC": "LOCATION",
    "DATE": "TEMPORAL",
    "TIME": "TEMPORAL",
    "CARDINAL": "NUMERIC",
    "ORDINAL": "NUMERIC",
    "QUANTITY": "NUMERIC",
    "PERCENT": "NUMERIC",
    "MONEY": "NUMERIC",
    "ORG": "THING",
    "NORP": "THING",
    "PRODUCT": "THING",
    "EVENT": "THING",
    "WORK_OF_ART": "THING",
    "LAW": "THING",
    "LANGUAGE": "THING",
    "MISC": "THING",
}

# PropBank-style role inventory -> restricted interchange roles.  Roles
# mapping to None are dropped on export.
SRL_ROLE_MAP = {
    "ARG0": "ARG0",
    "A0": "ARG0",
    "ARG1": "ARG1",
    "A1": "ARG1",
    "ARG2": "ARG2",
    "A2": "ARG2",
    "ARGM-LOC": "ARGM-LOC",
    "AM-LOC": "ARGM-LOC",
    "ARGM-TMP": "ARGM-TMP",
    "AM-TMP": "ARGM-TMP",
}


def map_entity_tag(tag: str) -> str:
    label = NER_TAG_MAP.get(tag.upper())
    if label is None:
        logger.warning("unmapped NER tag %r falls back to THING", tag)
        return "THING"
    return label


def map_srl_role(role: str) -> str | None:
    mapped = SRL_ROLE_MAP.get(role.upper())
    if mapped is None:
        logger.warning("dropping SRL role %r outside the restricted set",
                       role)
    return mapped
