"""Per-TTI intra-slice scheduling inside a hard + common RB partition.

URLLC UEs are ordered earliest-deadline-first, eMBB UEs round-robin. Each
slice first fills its own hard RBs, then backlogged UEs contend for the
common pool in slice-priority order.
"""
from __future__ import annotations

import bisect
from dataclasses import dataclass, field


class InvalidAllocation(ValueError):
    pass


@dataclass
class TtiAllocation:
    per_ue_rbs: dict = field(default_factory=dict)
    per_slice_hard_used: dict = field(default_factory=dict)
    per_slice_common_used: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.per_slice_hard_used.values()) + sum(self.per_slice_common_used.values())


def edf_order(queues) -> list:
    """Backlogged queues as ``(ue_id, head deadline)``, earliest first, ties by ue_id."""
    out = [(q.ue_id, q.packets[0].deadline_tti) for q in queues if q.packets]
    out.sort(key=lambda e: (e[1], e[0]))
    return out


def rr_order(ue_ids, cursor) -> list:
    """Cyclic order of ``ue_ids`` starting just after ``cursor``."""
    ids = sorted(ue_ids)
    if not ids:
        return []
    start = bisect.bisect_right(ids, cursor) if cursor is not None else 0
    start %= len(ids)
    return ids[start:] + ids[:start]


def rbs_needed(backlog_bits: float, bits_per_rb: float) -> int:
    if backlog_bits <= 0 or bits_per_rb <= 0:
        return 0
    return -int(-backlog_bits // bits_per_rb)


def allocate_tti(hard: dict, common: int, demands: dict, rates_per_rb: dict, orders: dict,
                 priority=None) -> TtiAllocation:
    """Two-phase RB assignment.

    ``hard`` maps slice -> dedicated RBs, ``orders`` maps slice -> UE ids in
    scheduler order, ``priority`` lists slices in common-pool priority order
    (defaults to the order of ``orders``).
    """
    if common < 0 or any(w < 0 for w in hard.values()):
        raise InvalidAllocation("invalid allocation")
    out = TtiAllocation()
    per_ue = out.per_ue_rbs
    residual = {}
    for m, ues in orders.items():
        avail = hard.get(m, 0)
        used = 0
        for u in ues:
            if demands[u] < 0 or rates_per_rb[u] < 0:
                raise InvalidAllocation("invalid allocation")
            need = rbs_needed(demands[u], rates_per_rb[u])
            give = need if need <= avail - used else avail - used
            if give:
                per_ue[u] = give
                used += give
            if need > give:
                residual[u] = need - give
        out.per_slice_hard_used[m] = used
        out.per_slice_common_used[m] = 0
    avail = common
    for m in (priority if priority is not None else orders):
        if avail <= 0:
            break
        taken = 0
        for u in orders.get(m, ()):
            r = residual.get(u)
            if not r:
                continue
            give = r if r <= avail else avail
            per_ue[u] = per_ue.get(u, 0) + give
            avail -= give
            taken += give
            if avail == 0:
                break
        out.per_slice_common_used[m] = taken
    return out
