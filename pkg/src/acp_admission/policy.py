"""Policy configuration: scoring tables, anomaly windows, thresholds.

The engine is a pure function of (request, counters, policy); everything
tunable lives on :class:`PolicyConfig`, which is immutable and carries a
content hash so decisions can be attributed to an exact policy version.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

from .canonical import canonical_bytes

CAPABILITY_PREFIX = "acp:cap:"
FALLBACK_KEY = "fallback"


class PolicyError(ValueError):
    pass


class ResourceClass(str, Enum):
    PUBLIC = "public"
    SENSITIVE = "sensitive"
    RESTRICTED = "restricted"


class ContextFlag(str, Enum):
    EXTERNAL_IP = "external_ip"
    OFF_HOURS = "off_hours"
    GEO_OUTSIDE = "geo_outside"
    UNTRUSTED_DEVICE = "untrusted_device"


class HistoryFlag(str, Enum):
    RECENT_DENIAL = "recent_denial"
    ANOMALOUS_FREQUENCY = "anomalous_frequency"


class EngineVersion(str, Enum):
    RISK_2_0 = "RISK_2_0"
    RISK_3_0 = "RISK_3_0"


def parse_capability(cap: str) -> tuple[str, str]:
    """Split ``acp:cap:<domain>.<action>`` (prefix optional) into its parts."""
    if not isinstance(cap, str) or not cap:
        raise PolicyError("capability must be a non-empty string")
    tail = cap[len(CAPABILITY_PREFIX):] if cap.startswith(CAPABILITY_PREFIX) else cap
    if tail.count(".") != 1:
        raise PolicyError(f"capability {cap!r} must have the form <domain>.<action>")
    domain, action = tail.split(".")
    if not domain or not action:
        raise PolicyError(f"capability {cap!r} has an empty domain or action")
    return domain, action


@dataclass(frozen=True)
class Thresholds:
    approved_max: int
    escalated_max: int

    def __post_init__(self) -> None:
        for name in ("approved_max", "escalated_max"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool):
                raise PolicyError(f"{name} must be an integer")
        if not 0 <= self.approved_max < self.escalated_max <= 99:
            raise PolicyError(
                f"thresholds must satisfy 0 <= approved_max < escalated_max <= 99, "
                f"got ({self.approved_max}, {self.escalated_max})"
            )


DEFAULT_THRESHOLDS = Thresholds(approved_max=39, escalated_max=69)

_MAP_FIELDS = ("capability_base", "resource_scores", "ctx_weights", "hist_weights")
_INT_FIELDS = (
    "rule1_threshold_n",
    "rule2_threshold_x",
    "rule3_threshold_y",
    "cooldown_trigger_denials",
)
_WINDOW_FIELDS = (
    "rule1_window_s",
    "rule2_window_s",
    "rule3_window_s",
    "cooldown_trigger_window_s",
    "cooldown_period_s",
)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


@dataclass(frozen=True)
class PolicyConfig:
    capability_base: Mapping[str, int]
    resource_scores: Mapping[ResourceClass, int]
    ctx_weights: Mapping[ContextFlag, int]
    hist_weights: Mapping[HistoryFlag, int]
    rule1_threshold_n: int = 10
    rule1_window_s: int = 60
    rule2_threshold_x: int = 3
    rule2_window_s: int = 86_400
    rule3_threshold_y: int = 3
    rule3_window_s: int = 300
    cooldown_trigger_denials: int = 3
    cooldown_trigger_window_s: int = 600
    cooldown_period_s: int = 600
    thresholds_by_autonomy: Mapping[int, Thresholds] = field(default_factory=dict)
    engine_version: EngineVersion = EngineVersion.RISK_2_0
    policy_hash: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "capability_base", MappingProxyType(dict(self.capability_base)))
        set_(self, "resource_scores", MappingProxyType(
            {ResourceClass(k): v for k, v in self.resource_scores.items()}))
        set_(self, "ctx_weights", MappingProxyType(
            {ContextFlag(k): v for k, v in self.ctx_weights.items()}))
        set_(self, "hist_weights", MappingProxyType(
            {HistoryFlag(k): v for k, v in self.hist_weights.items()}))
        set_(self, "thresholds_by_autonomy", MappingProxyType(
            {int(k): v for k, v in self.thresholds_by_autonomy.items()}))
        set_(self, "engine_version", EngineVersion(self.engine_version))
        self._validate()
        set_(self, "policy_hash", compute_policy_hash(self))

    def _validate(self) -> None:
        if FALLBACK_KEY not in self.capability_base:
            raise PolicyError("capability_base needs a 'fallback' entry")
        for name in _MAP_FIELDS:
            for k, v in getattr(self, name).items():
                if not _is_int(v) or v < 0:
                    raise PolicyError(f"{name}[{k}] must be a non-negative integer, got {v!r}")
        missing = set(ResourceClass) - set(self.resource_scores)
        if missing:
            raise PolicyError(f"resource_scores missing {sorted(m.value for m in missing)}")
        for name in _INT_FIELDS:
            v = getattr(self, name)
            if not _is_int(v) or v < 0:
                raise PolicyError(f"{name} must be a non-negative integer, got {v!r}")
        for name in _WINDOW_FIELDS:
            v = getattr(self, name)
            if not _is_int(v) or v <= 0:
                raise PolicyError(f"{name} must be a positive integer number of seconds, got {v!r}")
        for level, th in self.thresholds_by_autonomy.items():
            if level not in range(1, 5):
                raise PolicyError(f"thresholds_by_autonomy has invalid level {level}")
            if not isinstance(th, Thresholds):
                raise PolicyError(f"thresholds for level {level} must be Thresholds")

    def thresholds_for(self, level: int) -> Thresholds | None:
        """Thresholds for an autonomy level; None means forced denial."""
        return self.thresholds_by_autonomy.get(level)

    def to_dict(self, include_hash: bool = False) -> dict[str, Any]:
        """Plain JSON-compatible form with snake_case keys."""
        out: dict[str, Any] = {
            "capability_base": dict(self.capability_base),
            "resource_scores": {k.value: v for k, v in self.resource_scores.items()},
            "ctx_weights": {k.value: v for k, v in self.ctx_weights.items()},
            "hist_weights": {k.value: v for k, v in self.hist_weights.items()},
        }
        for name in _INT_FIELDS + _WINDOW_FIELDS:
            out[name] = getattr(self, name)
        out["thresholds_by_autonomy"] = {
            str(level): {"approved_max": th.approved_max, "escalated_max": th.escalated_max}
            for level, th in self.thresholds_by_autonomy.items()
        }
        out["engine_version"] = self.engine_version.value
        if include_hash:
            out["policy_hash"] = self.policy_hash
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PolicyConfig:
        """Build a policy from its JSON form.

        Unknown keys are rejected. A supplied ``policy_hash`` is ignored and
        recomputed.
        """
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise PolicyError(f"unknown policy fields: {sorted(unknown)}")
        kwargs = {k: v for k, v in data.items() if k != "policy_hash"}
        missing = {f.name for f in fields(cls)} - set(kwargs) - {"policy_hash"}
        if missing:
            raise PolicyError(f"missing policy fields: {sorted(missing)}")
        try:
            kwargs["thresholds_by_autonomy"] = _parse_thresholds(kwargs["thresholds_by_autonomy"])
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, PolicyError):
                raise
            raise PolicyError(str(exc)) from exc

    def with_overrides(self, overrides: Mapping[str, Any]) -> PolicyConfig:
        """Return a copy with ``overrides`` applied.

        Table fields (capability_base, resource_scores, ctx_weights,
        hist_weights, thresholds_by_autonomy) are merged entry by entry;
        scalar fields are replaced.
        """
        unknown = set(overrides) - {f.name for f in fields(self)} - {"policy_hash"}
        if unknown:
            raise PolicyError(f"unknown policy override fields: {sorted(unknown)}")
        base = self.to_dict()
        for key, value in overrides.items():
            if key == "policy_hash":
                continue
            if key in _MAP_FIELDS or key == "thresholds_by_autonomy":
                if not isinstance(value, Mapping):
                    raise PolicyError(f"override for {key} must be an object")
                merged = dict(base[key])
                merged.update({str(k) if key == "thresholds_by_autonomy" else k: v
                               for k, v in value.items()})
                base[key] = merged
            else:
                base[key] = value
        return PolicyConfig.from_dict(base)

    def replace(self, **changes: Any) -> PolicyConfig:
        changes.pop("policy_hash", None)
        return replace(self, **changes)


def _parse_thresholds(raw: Mapping[Any, Any]) -> dict[int, Thresholds]:
    out: dict[int, Thresholds] = {}
    for level, th in raw.items():
        if isinstance(th, Thresholds):
            out[int(level)] = th
            continue
        if not isinstance(th, Mapping) or set(th) != {"approved_max", "escalated_max"}:
            raise PolicyError(f"thresholds for level {level} need approved_max and escalated_max")
        out[int(level)] = Thresholds(th["approved_max"], th["escalated_max"])
    return out


def default_policy() -> PolicyConfig:
    return PolicyConfig(
        capability_base={
            "*.read": 0,
            "*.write": 10,
            "financial.payment": 35,
            "financial.transfer": 35,
            "admin.*": 60,
            FALLBACK_KEY: 20,
        },
        resource_scores={
            ResourceClass.PUBLIC: 0,
            ResourceClass.SENSITIVE: 15,
            ResourceClass.RESTRICTED: 45,
        },
        ctx_weights={
            ContextFlag.EXTERNAL_IP: 20,
            ContextFlag.OFF_HOURS: 15,
            ContextFlag.GEO_OUTSIDE: 0,
            ContextFlag.UNTRUSTED_DEVICE: 0,
        },
        hist_weights={HistoryFlag.RECENT_DENIAL: 0, HistoryFlag.ANOMALOUS_FREQUENCY: 0},
        thresholds_by_autonomy={level: DEFAULT_THRESHOLDS for level in (1, 2, 3, 4)},
    )


def compute_policy_hash(policy: PolicyConfig) -> str:
    return hashlib.sha256(canonical_bytes(policy.to_dict())).hexdigest()


def load_policy(path: str | Path) -> PolicyConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PolicyError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise PolicyError(f"{path}: policy file must contain a JSON object")
    return PolicyConfig.from_dict(data)


def _pattern_match(pattern: str, domain: str, action: str) -> int | None:
    """Specificity of ``pattern`` against (domain, action), None if no match."""
    if pattern.startswith(CAPABILITY_PREFIX):
        pattern = pattern[len(CAPABILITY_PREFIX):]
    if "." not in pattern:
        # bare token names either the domain or the action
        return 1 if pattern in (domain, action) else None
    pd, _, pa = pattern.partition(".")
    if pd not in ("*", domain) or pa not in ("*", action):
        return None
    return (pd != "*") + (pa != "*")


def lookup_base(policy: PolicyConfig, cap: str) -> int:
    """Baseline score for a capability.

    The most specific matching pattern wins (``financial.transfer`` beats
    ``*.transfer`` and ``financial.*``). Equally specific matches resolve
    to the higher score. No match returns the fallback entry.
    """
    domain, action = parse_capability(cap)
    best: tuple[int, int] | None = None
    for pattern, score in policy.capability_base.items():
        if pattern == FALLBACK_KEY:
            continue
        rank = _pattern_match(pattern, domain, action)
        if rank is not None and (best is None or (rank, score) > best):
            best = (rank, score)
    return policy.capability_base[FALLBACK_KEY] if best is None else best[1]
