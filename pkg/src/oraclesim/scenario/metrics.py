"""Run metrics, computed from the event log alone.

Live runs and replays both go through :func:`compute_metrics`, so a replay
of a run's log reproduces its metrics exactly.
"""

from __future__ import annotations

import json
from typing import Any, Iterable

from oraclesim.ledger import LedgerEvent, decode_payload


def _record(kind: str, **fields: Any) -> dict[str, Any]:
    return {"record": kind, **fields}


def compute_metrics(events: Iterable[LedgerEvent]) -> list[dict[str, Any]]:
    meta: dict[str, Any] = {}
    labels: dict[str, str] = {}
    slas: dict[int, dict[str, Any]] = {}
    oracles: dict[str, dict[str, Any]] = {}
    inquiries: dict[int, dict[str, Any]] = {}
    challenges: dict[int, int] = {}
    count = 0

    def oracle(hex_address: str) -> dict[str, Any]:
        return oracles.setdefault(
            hex_address,
            {"oracle": hex_address, "label": labels.get(hex_address), "reputation": [], "tokens_net": 0,
             "valid": 0, "invalid": 0},
        )

    def inquiry(inquiry_id: int) -> dict[str, Any]:
        return inquiries.setdefault(
            inquiry_id,
            {"inquiry": inquiry_id, "answer": None, "final": None, "challenge": None, "truth": None},
        )

    for event in events:
        count += 1
        topic = event.topic
        if topic == "scenario_meta":
            meta = decode_payload(event.payload)
            labels = dict(meta.pop("accounts", {}))
        elif topic == "sla_proposed":
            data = decode_payload(event.payload)
            slas[data["sla"]] = {
                "sla": data["sla"], "status": "pending", "answer": None, "truth": None,
                "proposed_at": event.height, "answered_at": None,
            }
        elif topic == "scenario_truth":
            data = decode_payload(event.payload)
            if data["sla"] in slas:
                slas[data["sla"]]["truth"] = data["truth"]
        elif topic == "sla_voided":
            data = decode_payload(event.payload)
            slas[data["sla"]]["status"] = "voided"
        elif topic == "sla_aggregated":
            data = decode_payload(event.payload)
            record = slas[data["sla"]]
            record.update(status=data["status"], answer=data["answer"], answered_at=event.height)
        elif topic == "validity_recorded":
            data = decode_payload(event.payload)
            entry = oracle(data["oracle"])
            entry["reputation"].append([event.height, data["score"]])
            entry["valid" if data["valid"] else "invalid"] += 1
            entry["tokens_net"] -= data["forfeited"]
        elif topic == "sla_settled":
            data = decode_payload(event.payload)
            for hex_address, amount in data["payouts"].items():
                oracle(hex_address)["tokens_net"] += amount
        elif topic == "inquiry_opened":
            inquiry(decode_payload(event.payload)["inquiry"])
        elif topic == "scenario_inquiry_truth":
            data = decode_payload(event.payload)
            inquiry(data["inquiry"])["truth"] = data["truth"]
        elif topic == "inquiry_resolved":
            data = decode_payload(event.payload)
            inquiry(data["inquiry"])["answer"] = data["answer"]
        elif topic == "challenge_opened":
            data = decode_payload(event.payload)
            challenges[data["challenge"]] = data["inquiry"]
            inquiry(data["inquiry"])["challenge"] = "open"
        elif topic == "challenge_resolved":
            data = decode_payload(event.payload)
            entry = inquiry(data["inquiry"])
            entry.update(challenge=data["outcome"], final=data["final"])
        elif topic == "inquiry_final":
            data = decode_payload(event.payload)
            inquiry(data["inquiry"])["final"] = data["answer"]

    records = []
    sla_records = []
    for sla_id in sorted(slas):
        entry = slas[sla_id]
        answered = entry["answered_at"] is not None
        correct = None
        if entry["truth"] is not None and entry["status"] != "pending":
            correct = entry["status"] == "decided" and entry["answer"] == entry["truth"]
        sla_records.append(
            _record(
                "sla", **entry, correct=correct,
                blocks_to_answer=entry["answered_at"] - entry["proposed_at"] if answered else None,
            )
        )
    inquiry_records = []
    for inquiry_id in sorted(inquiries):
        entry = inquiries[inquiry_id]
        settled = entry["final"] if entry["final"] is not None else entry["answer"]
        correct = None if entry["truth"] is None or settled is None else settled == entry["truth"]
        inquiry_records.append(_record("inquiry", **entry, correct=correct))
    oracle_records = [_record("oracle", **oracles[k]) for k in sorted(oracles, key=lambda h: (labels.get(h, ""), h))]
    judged = [r for r in sla_records if r["correct"] is not None]
    records.append(
        _record(
            "scenario",
            scenario=meta.get("scenario"),
            seed=meta.get("seed"),
            blocks=meta.get("blocks"),
            events=count,
            slas=len(sla_records),
            slas_correct=sum(1 for r in judged if r["correct"]),
            slas_judged=len(judged),
            inquiries=len(inquiry_records),
        )
    )
    return records + sla_records + oracle_records + inquiry_records


def metrics_jsonl(records: Iterable[dict[str, Any]]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":"), ensure_ascii=False) + "\n" for r in records)
