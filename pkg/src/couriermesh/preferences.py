"""Per-courier work-preference documents and delivery matching.

The document schema mirrors the courier settings surface: a delivery
polygon, vehicle and speed descriptors, shift availability in the
instance's local timezone, and tag lists. ``matches`` evaluates only the
hard constraints (geography, shift, weight, order size, restaurant type);
the remaining fields are ranking hints surfaced to assignment unchanged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Any, Optional

from . import geo
from .config import InstanceConfig
from .errors import VALIDATION_ERROR, ProtocolError
from .lifecycle import Delivery

VEHICLE_TYPES = ("BICYCLE", "EBIKE", "SCOOTER", "CAR", "WALK")
DELIVERY_SPEEDS = ("REGULAR", "RUSH")
ORDER_SIZES = ("SMALL_ORDER", "MEDIUM_ORDER", "LARGE_ORDER")
WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")

_SHIFT_RE = re.compile(r"^([01]\d|2[0-3]):([0-5]\d)-([01]\d|2[0-3]):([0-5]\d)$")


@dataclass(frozen=True)
class CourierPreferences:
    deliveryPolygon: dict[str, Any]
    vehicleType: str = "BICYCLE"
    preferredAreas: tuple[str, ...] = ()
    shiftAvailability: dict[str, tuple[str, ...]] = field(default_factory=dict)
    deliveryPreferences: tuple[str, ...] = ()
    foodPreferences: tuple[str, ...] = ()
    earningGoals: dict[str, str] = field(default_factory=dict)
    deliverySpeed: str = "REGULAR"
    restaurantTypes: tuple[str, ...] = ()
    cuisineTypes: tuple[str, ...] = ()
    dietaryRestrictions: tuple[str, ...] = ("NONE",)
    maxItemWeightLbs: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "deliveryPolygon": self.deliveryPolygon,
            "vehicleType": self.vehicleType,
            "preferredAreas": list(self.preferredAreas),
            "shiftAvailability": {k: list(v) for k, v in self.shiftAvailability.items()},
            "deliveryPreferences": list(self.deliveryPreferences),
            "foodPreferences": list(self.foodPreferences),
            "earningGoals": dict(self.earningGoals),
            "deliverySpeed": self.deliverySpeed,
            "restaurantTypes": list(self.restaurantTypes),
            "cuisineTypes": list(self.cuisineTypes),
            "dietaryRestrictions": list(self.dietaryRestrictions),
            "maxItemWeightLbs": self.maxItemWeightLbs,
        }

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "CourierPreferences":
        return CourierPreferences(
            deliveryPolygon=d["deliveryPolygon"],
            vehicleType=d.get("vehicleType", "BICYCLE"),
            preferredAreas=tuple(d.get("preferredAreas", ())),
            shiftAvailability={k: tuple(v) for k, v in d.get("shiftAvailability", {}).items()},
            deliveryPreferences=tuple(d.get("deliveryPreferences", ())),
            foodPreferences=tuple(d.get("foodPreferences", ())),
            earningGoals=dict(d.get("earningGoals", {})),
            deliverySpeed=d.get("deliverySpeed", "REGULAR"),
            restaurantTypes=tuple(d.get("restaurantTypes", ())),
            cuisineTypes=tuple(d.get("cuisineTypes", ())),
            dietaryRestrictions=tuple(d.get("dietaryRestrictions", ("NONE",))),
            maxItemWeightLbs=d.get("maxItemWeightLbs"),
        )


def default_preferences(territory: dict[str, Any]) -> CourierPreferences:
    """Document created at enrollment: unconstrained, polygon = instance territory."""
    return CourierPreferences(deliveryPolygon=territory)


def _validate_str_list(value: Any, fname: str, errors: dict[str, str]) -> None:
    if not isinstance(value, (list, tuple)) or not all(isinstance(x, str) for x in value):
        errors[fname] = "must be a list of strings"


def validate_patch(partial: dict[str, Any]) -> dict[str, str]:
    """Per-field validation; returns {field: problem} for every bad field."""
    errors: dict[str, str] = {}
    allowed = set(CourierPreferences(deliveryPolygon={}).to_dict())
    for fname in set(partial) - allowed:
        errors[fname] = "unknown field"
    for fname, value in partial.items():
        if fname in errors:
            continue
        if fname == "deliveryPolygon":
            try:
                geom = geo.parse_geometry(value)
                if len(geom) != 1:
                    errors[fname] = "must be a single Polygon"
            except ProtocolError as e:
                errors[fname] = e.message
        elif fname == "vehicleType":
            if value not in VEHICLE_TYPES:
                errors[fname] = f"must be one of {', '.join(VEHICLE_TYPES)}"
        elif fname == "deliverySpeed":
            if value not in DELIVERY_SPEEDS:
                errors[fname] = f"must be one of {', '.join(DELIVERY_SPEEDS)}"
        elif fname == "deliveryPreferences":
            if not isinstance(value, (list, tuple)) or any(v not in ORDER_SIZES for v in value):
                errors[fname] = f"entries must be one of {', '.join(ORDER_SIZES)}"
        elif fname == "shiftAvailability":
            if not isinstance(value, dict):
                errors[fname] = "must map weekday to time ranges"
                continue
            for day, ranges in value.items():
                if day not in WEEKDAYS:
                    errors[fname] = f"unknown weekday {day!r}"
                    break
                if not isinstance(ranges, (list, tuple)):
                    errors[fname] = f"{day}: ranges must be a list"
                    break
                for rng in ranges:
                    m = _SHIFT_RE.match(rng) if isinstance(rng, str) else None
                    if not m:
                        errors[fname] = f"{day}: {rng!r} is not HH:MM-HH:MM"
                        break
                    start = int(m.group(1)) * 60 + int(m.group(2))
                    end = int(m.group(3)) * 60 + int(m.group(4))
                    if start >= end:
                        errors[fname] = f"{day}: {rng} start must precede end"
                        break
                if fname in errors:
                    break
        elif fname == "earningGoals":
            if not isinstance(value, dict) or not all(
                isinstance(k, str) and isinstance(v, str) for k, v in value.items()
            ):
                errors[fname] = "must map strings to strings"
        elif fname == "dietaryRestrictions":
            if (
                not isinstance(value, (list, tuple))
                or not value
                or not all(isinstance(x, str) for x in value)
                or ("NONE" in value and len(value) > 1)
            ):
                errors[fname] = 'must be ["NONE"] or a non-empty list without "NONE"'
        elif fname == "maxItemWeightLbs":
            if value is not None and (not isinstance(value, (int, float)) or value <= 0):
                errors[fname] = "must be a positive number"
        else:
            _validate_str_list(value, fname, errors)
    return errors


def apply_patch(prefs: CourierPreferences, partial: dict[str, Any]) -> CourierPreferences:
    """Wholesale field replacement; lists replace, never merge."""
    errors = validate_patch(partial)
    if errors:
        raise ProtocolError(VALIDATION_ERROR, "invalid preference fields", errors)
    return CourierPreferences.from_dict({**prefs.to_dict(), **partial})


def order_size_class(weight_lbs: float, cfg: InstanceConfig) -> str:
    if weight_lbs < cfg.smallOrderMaxLbs:
        return "SMALL_ORDER"
    if weight_lbs < cfg.mediumOrderMaxLbs:
        return "MEDIUM_ORDER"
    return "LARGE_ORDER"


def _in_shift(prefs: CourierPreferences, at: datetime, cfg: InstanceConfig) -> bool:
    if not prefs.shiftAvailability:
        return True
    local = at.astimezone(cfg.tzinfo())
    day = WEEKDAYS[local.weekday()]
    minute = local.hour * 60 + local.minute
    for rng in prefs.shiftAvailability.get(day, ()):
        m = _SHIFT_RE.match(rng)
        if m is None:
            continue
        start = int(m.group(1)) * 60 + int(m.group(2))
        end = int(m.group(3)) * 60 + int(m.group(4))
        if start <= minute < end:
            return True
    return False


def matches(
    prefs: CourierPreferences, d: Delivery, at: datetime, cfg: InstanceConfig
) -> dict[str, Any]:
    """Hard-constraint check; returns {eligible, reasons} with every failure listed."""
    reasons: list[str] = []
    geom = geo.parse_geometry(prefs.deliveryPolygon)
    if not geo.point_in_geometry((d.pickupLocation.lon, d.pickupLocation.lat), geom):
        reasons.append("pickup outside deliveryPolygon")
    if not geo.point_in_geometry((d.dropoffLocation.lon, d.dropoffLocation.lat), geom):
        reasons.append("dropoff outside deliveryPolygon")
    if not _in_shift(prefs, at, cfg):
        reasons.append("outside shiftAvailability")
    if (
        prefs.maxItemWeightLbs is not None
        and d.itemWeightLbs is not None
        and d.itemWeightLbs > prefs.maxItemWeightLbs
    ):
        reasons.append("itemWeightLbs exceeds maxItemWeightLbs")
    if prefs.deliveryPreferences and d.itemWeightLbs is not None:
        cls = order_size_class(d.itemWeightLbs, cfg)
        if cls not in prefs.deliveryPreferences:
            reasons.append(f"order size {cls} not in deliveryPreferences")
    if prefs.restaurantTypes and not (set(d.merchantTags) & set(prefs.restaurantTypes)):
        reasons.append("no merchantTags match restaurantTypes")
    return {"eligible": not reasons, "reasons": reasons}
