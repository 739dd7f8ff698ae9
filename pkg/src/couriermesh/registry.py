"""Instance registry: the discovery directory for the whole ecosystem.

A registry is a JSON document {version, records: [...]} served either from
a file (read-only, as apps embed it) or from the registry service (which
accepts registrations). Queries filter by point containment, region
intersection, language, and free-text substring, and always return records
in a stable order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Optional

from . import geo
from .errors import (
    DUPLICATE_DOMAIN,
    INVALID_GEOMETRY,
    PARSE_ERROR,
    READ_ONLY_REGISTRY,
    SOURCE_UNAVAILABLE,
    VALIDATION_ERROR,
    ProtocolError,
)

_DOMAIN_RE = re.compile(r"^[a-z0-9]([a-z0-9-]*[a-z0-9])?(\.[a-z0-9]([a-z0-9-]*[a-z0-9])?)+$")
_LANG_RE = re.compile(r"^[A-Za-z]{2,8}(-[A-Za-z0-9]{1,8})*$")

RECORD_FIELDS = (
    "instanceName",
    "admin",
    "contact",
    "logoUrl",
    "domainName",
    "termsOfServiceUrl",
    "privacyPolicyUrl",
    "location",
    "languages",
    "description",
)


@dataclass(frozen=True)
class InstanceRecord:
    instanceName: str
    admin: str
    contact: str
    domainName: str
    termsOfServiceUrl: str
    privacyPolicyUrl: str
    location: dict[str, Any]
    languages: tuple[str, ...]
    description: str
    logoUrl: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "instanceName": self.instanceName,
            "admin": self.admin,
            "contact": self.contact,
            "logoUrl": self.logoUrl,
            "domainName": self.domainName,
            "termsOfServiceUrl": self.termsOfServiceUrl,
            "privacyPolicyUrl": self.privacyPolicyUrl,
            "location": self.location,
            "languages": list(self.languages),
            "description": self.description,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "InstanceRecord":
        problems: dict[str, str] = {}
        unknown = set(d) - set(RECORD_FIELDS)
        if unknown:
            problems.update({f: "unknown field" for f in sorted(unknown)})

        def text(fname: str, required: bool = True, max_len: Optional[int] = None) -> str:
            v = d.get(fname)
            if v is None and not required:
                return ""
            if not isinstance(v, str) or (required and not v.strip()):
                problems[fname] = "must be non-empty text"
                return ""
            if max_len and len(v) > max_len:
                problems[fname] = f"longer than {max_len} chars"
            return v

        name = text("instanceName")
        admin = text("admin")
        contact = text("contact")
        tos = text("termsOfServiceUrl")
        privacy = text("privacyPolicyUrl")
        description = text("description", max_len=2000)
        logo = d.get("logoUrl")
        if logo is not None and not isinstance(logo, str):
            problems["logoUrl"] = "must be text"

        domain = d.get("domainName")
        if not isinstance(domain, str) or not _DOMAIN_RE.match(domain.lower()):
            problems["domainName"] = "must be a DNS name"
            domain = ""
        else:
            domain = domain.lower()

        langs = d.get("languages")
        if (
            not isinstance(langs, (list, tuple))
            or not langs
            or not all(isinstance(x, str) and _LANG_RE.match(x) for x in langs)
        ):
            problems["languages"] = "must be a non-empty list of BCP-47 tags"
            langs = ()

        location = d.get("location")
        try:
            geo.parse_geometry(location)
        except ProtocolError as e:
            problems["location"] = e.message
            location = {}

        if problems:
            raise ProtocolError(
                VALIDATION_ERROR,
                f"invalid instance record {d.get('domainName', '?')!r}",
                problems,
            )
        return InstanceRecord(
            instanceName=name,
            admin=admin,
            contact=contact,
            domainName=domain,
            termsOfServiceUrl=tos,
            privacyPolicyUrl=privacy,
            location=location,
            languages=tuple(langs),
            description=description,
            logoUrl=logo,
        )


@dataclass
class Registry:
    records: list[InstanceRecord] = field(default_factory=list)
    sourceKind: str = "EMBEDDED_FILE"  # EMBEDDED_FILE | SERVICE
    version: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"version": self.version, "records": [r.to_dict() for r in self.records]}

    def by_domain(self, domain: str) -> Optional[InstanceRecord]:
        domain = domain.lower()
        for r in self.records:
            if r.domainName == domain:
                return r
        return None


def parse_registry(raw: Any, source_kind: str = "EMBEDDED_FILE") -> Registry:
    if not isinstance(raw, dict) or not isinstance(raw.get("records"), list):
        raise ProtocolError(PARSE_ERROR, "registry document must be {version, records:[...]}")
    records = [InstanceRecord.from_dict(r) for r in raw["records"]]
    seen: set[str] = set()
    for r in records:
        if r.domainName in seen:
            raise ProtocolError(
                VALIDATION_ERROR, f"duplicate domainName {r.domainName!r} in registry"
            )
        seen.add(r.domainName)
    version = raw.get("version", 0)
    if not isinstance(version, int) or version < 0:
        raise ProtocolError(VALIDATION_ERROR, "version must be a non-negative integer")
    return Registry(records=records, sourceKind=source_kind, version=version)


def load_registry(path: str) -> Registry:
    """Load the embedded-file form; rejects the whole document on any bad record."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ProtocolError(SOURCE_UNAVAILABLE, f"registry source not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ProtocolError(PARSE_ERROR, f"registry is not valid JSON: {e}") from None
    return parse_registry(raw, "EMBEDDED_FILE")


def save_registry(reg: Registry, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(reg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def register_instance(reg: Registry, rec: InstanceRecord) -> Registry:
    """Append a record (service registries only). Identical re-registration is a no-op."""
    if reg.sourceKind != "SERVICE":
        raise ProtocolError(READ_ONLY_REGISTRY, "embedded-file registries do not accept writes")
    existing = reg.by_domain(rec.domainName)
    if existing is not None:
        if existing == rec:
            return reg
        raise ProtocolError(DUPLICATE_DOMAIN, f"domainName {rec.domainName!r} already registered")
    return Registry(
        records=reg.records + [rec], sourceKind=reg.sourceKind, version=reg.version + 1
    )


def merge_registries(registries: list[Registry]) -> Registry:
    """Earliest-loaded registry wins on domainName collision."""
    seen: set[str] = set()
    merged: list[InstanceRecord] = []
    for reg in registries:
        for rec in reg.records:
            if rec.domainName not in seen:
                seen.add(rec.domainName)
                merged.append(rec)
    return Registry(records=merged, sourceKind="EMBEDDED_FILE", version=0)


def query_instances(
    reg: Registry,
    point: Optional[tuple[float, float]] = None,
    region: Optional[dict[str, Any]] = None,
    language: Optional[str] = None,
    text: Optional[str] = None,
) -> list[InstanceRecord]:
    """All-filters-must-match lookup, ordered by (instanceName, domainName)."""
    if point is not None and region is not None:
        raise ProtocolError(VALIDATION_ERROR, "supply at most one of point/region")
    if point is not None:
        geo.validate_lon_lat(point[0], point[1])
    region_geom = geo.parse_geometry(region) if region is not None else None

    out: list[InstanceRecord] = []
    for rec in reg.records:
        rec_geom = geo.parse_geometry(rec.location)
        if point is not None and not geo.point_in_geometry(point, rec_geom):
            continue
        if region_geom is not None and not geo.geometries_intersect(region_geom, rec_geom):
            continue
        if language is not None and language not in rec.languages:
            continue
        if text is not None:
            needle = text.lower()
            hay = f"{rec.instanceName}\n{rec.description}\n{rec.domainName}".lower()
            if needle not in hay:
                continue
        out.append(rec)
    out.sort(key=lambda r: (r.instanceName, r.domainName))
    return out
