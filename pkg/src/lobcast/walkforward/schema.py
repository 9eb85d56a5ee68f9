"""JSON-schema validation of report documents."""
from __future__ import annotations

import json
from importlib import resources

import jsonschema


def report_schema() -> dict:
    return json.loads(resources.files("lobcast").joinpath("schemas/report.schema.json")
                      .read_text(encoding="utf-8"))


def validate_report(doc: dict) -> None:
    """Raise ``jsonschema.ValidationError`` when ``doc`` is not a valid report."""
    jsonschema.validate(doc, report_schema())
