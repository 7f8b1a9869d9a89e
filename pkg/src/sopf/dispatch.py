"""Decoded dispatch: per-scenario (and per-contingency) arrays keyed by case order."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .formulation import ModelKind, VariableRef
from .network import PowerSystemCase

__all__ = ["DispatchResult", "decode_dispatch"]


@dataclass
class DispatchResult:
    """Solution arrays.

    Shapes: ``p, r`` (S, G); ``pir, cir`` (S, IR); ``theta`` (S, N);
    ``flow`` (S, K); ``theta_c`` (S, C, N); ``flow_c`` and ``z`` (S, C, K).
    Contingency arrays are ``None`` for models without contingencies.
    ``z`` is 1 for closed lines, for lines that cannot switch and for the
    outaged branch itself (its flow is pinned to zero separately).
    """

    kind: ModelKind
    objective: float
    weights: np.ndarray
    unit_ids: list
    renewable_ids: list
    bus_ids: list
    branch_ids: list
    outages: list
    p: np.ndarray
    r: np.ndarray
    pir: np.ndarray
    cir: np.ndarray
    theta: np.ndarray
    flow: np.ndarray
    theta_c: np.ndarray | None = None
    flow_c: np.ndarray | None = None
    z: np.ndarray | None = None

    @property
    def n_scenarios(self) -> int:
        return self.p.shape[0]

    def gen_cost(self, case: PowerSystemCase) -> float:
        """Expected thermal cost recomputed from the dispatch."""
        cost = np.array([u.cost for u in case.online_units])
        return float(self.weights @ (self.p @ cost))

    def openings(self) -> list[tuple[int, int, object]]:
        """(scenario, contingency index, branch id) for every opened line."""
        if self.z is None:
            return []
        s, c, k = np.nonzero(self.z < 0.5)
        return [(int(a), int(b), self.branch_ids[int(kk)]) for a, b, kk in zip(s, c, k)]

    def curtailment(self) -> np.ndarray:
        return self.cir

    def copy(self) -> DispatchResult:
        fields = {}
        for name in self.__dataclass_fields__:
            v = getattr(self, name)
            fields[name] = v.copy() if isinstance(v, np.ndarray) else v
        return DispatchResult(**fields)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "objective": self.objective}
        for name in ("unit_ids", "renewable_ids", "bus_ids", "branch_ids", "outages"):
            out[name] = list(getattr(self, name))
        for name in ("weights", "p", "r", "pir", "cir", "theta", "flow", "theta_c", "flow_c", "z"):
            v = getattr(self, name)
            out[name] = None if v is None else v.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> DispatchResult:
        arrays = {}
        for name in ("weights", "p", "r", "pir", "cir", "theta", "flow", "theta_c", "flow_c", "z"):
            v = d.get(name)
            arrays[name] = None if v is None else np.asarray(v, dtype=float)
        return cls(
            kind=ModelKind(d["kind"]),
            objective=float(d["objective"]),
            unit_ids=list(d["unit_ids"]),
            renewable_ids=list(d["renewable_ids"]),
            bus_ids=list(d["bus_ids"]),
            branch_ids=list(d["branch_ids"]),
            outages=list(d["outages"]),
            **arrays,
        )

    @classmethod
    def from_json(cls, text: str) -> DispatchResult:
        return cls.from_dict(json.loads(text))


def decode_dispatch(case: PowerSystemCase, solution) -> DispatchResult:
    """Unpack a solver result (LP, MILP or imported) into case-ordered arrays."""
    inc = getattr(solution, "incumbent", None) or solution
    lp = inc.lp
    x = inc.x
    idx = lp.col_index
    kind = lp.kind
    S = len(case.scenario_set)
    units = case.online_units
    ren = case.renewable_units

    def grab(var, ids, c=None):
        return np.array([[x[idx[VariableRef(var, s, c, e)]] for e in ids] for s in range(S)]).reshape(S, len(ids))

    uid = [u.id for u in units]
    wid = [w.id for w in ren]
    bid = [b.id for b in case.buses]
    kid = [k.id for k in case.branches]
    res = DispatchResult(
        kind=kind,
        objective=float(inc.objective),
        weights=case.scenario_set.weights,
        unit_ids=uid,
        renewable_ids=wid,
        bus_ids=bid,
        branch_ids=kid,
        outages=list(case.contingency_set.outages) if kind.has_contingencies else [],
        p=grab("p", uid),
        r=grab("r", uid),
        pir=grab("pIR", wid),
        cir=grab("cIR", wid),
        theta=grab("theta", bid),
        flow=grab("flow", kid),
    )
    if kind.has_contingencies:
        C = len(case.contingency_set)
        res.theta_c = np.stack([grab("theta_c", bid, c) for c in range(C)], axis=1)
        res.flow_c = np.stack([grab("flow_c", kid, c) for c in range(C)], axis=1)
        z = np.ones((S, C, len(kid)))
        if kind is ModelKind.E_SOPF_NR:
            for s in range(S):
                for c in range(C):
                    for k, b in enumerate(kid):
                        j = idx.get(VariableRef("z", s, c, b))
                        if j is not None:
                            z[s, c, k] = x[j]
        res.z = z
    return res
