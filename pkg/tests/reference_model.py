"""Brute-force reference model of the admission pipeline.

Kept deliberately naive: plain lists of timestamps, linear window
filters, no shared code with the engine beyond the policy tables.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

from acp_admission.policy import lookup_base


def in_window(stamps, window, now):
    return sum(1 for t in stamps if now - window < t <= now)


@dataclass
class ModelState:
    requests: dict = field(default_factory=dict)
    denials: dict = field(default_factory=dict)
    patterns: dict = field(default_factory=dict)
    cooldown: dict = field(default_factory=dict)


def key_of(req):
    return hashlib.sha256("|".join([req.agent_id, req.capability, req.resource]).encode()).hexdigest()


def model_step(state, req, policy, update_first=False):
    """Returns (decision, rs, rules) and mutates state like the execution contract."""
    a, t, k = req.agent_id, req.timestamp, key_of(req)

    def record():
        state.requests.setdefault(a, []).append(t)
        state.patterns.setdefault(k, []).append(t)

    if update_first:
        record()
    if state.cooldown.get(a, -1) > t:
        if not update_first:
            record()
        return "COOLDOWN_ACTIVE", 0, set()

    pats = state.patterns.get(k, [])
    if policy.engine_version.value == "RISK_3_0":
        rate = in_window(pats, policy.rule1_window_s, t)
    else:
        rate = in_window(state.requests.get(a, []), policy.rule1_window_s, t)
    rules = set()
    if rate > policy.rule1_threshold_n:
        rules.add("RULE1")
    if in_window(state.denials.get(a, []), policy.rule2_window_s, t) >= policy.rule2_threshold_x:
        rules.add("RULE2")
    if in_window(pats, policy.rule3_window_s, t) >= policy.rule3_threshold_y:
        rules.add("RULE3")
    bonus = {"RULE1": 20, "RULE2": 15, "RULE3": 15}
    total = (lookup_base(policy, req.capability) + policy.resource_scores[req.resource_class]
             + sum(policy.ctx_weights.get(f, 0) for f in req.context_flags)
             + sum(policy.hist_weights.get(f, 0) for f in req.history_flags)
             + sum(bonus[r] for r in rules))
    rs = min(100, total)
    th = policy.thresholds_for(req.autonomy_level)
    if th is None or rs > th.escalated_max:
        decision = "DENIED"
    elif rs > th.approved_max:
        decision = "ESCALATED"
    else:
        decision = "APPROVED"

    if not update_first:
        record()
    if decision == "DENIED":
        state.denials.setdefault(a, []).append(t)
        if in_window(state.denials[a], policy.cooldown_trigger_window_s, t) >= policy.cooldown_trigger_denials:
            state.cooldown[a] = t + policy.cooldown_period_s
    return decision, rs, rules
