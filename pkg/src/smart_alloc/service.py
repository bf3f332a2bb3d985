"""Live trial conduct service: an HTTP+JSON wrapper around the engine.

Each trial is persisted as an append-only newline-delimited JSON event log
(one file per trial).  Every assignment event stores the realized uniform
draw and the probability in force, so recovery never consumes randomness:
state is rebuilt by re-applying the logged transitions, after which the
generator is fast-forwarded to its recorded position.  Mutations within a
trial are serialized by a per-trial lock; reads build snapshots under the
same lock.
"""

from __future__ import annotations

import json
import math
import os
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .design import DomainError, ObjectiveKind
from .engine import (
    CELL_NAMES,
    EngineConfig,
    InvalidTransitionError,
    TrialEngine,
    UnknownPatientError,
)
from .inference import DtrId, InsufficientDataError, wald_test

EVENT_KINDS = (
    "TrialCreated",
    "PatientEnrolled",
    "Stage1Assigned",
    "ResponseRecorded",
    "Stage2Assigned",
    "OutcomeRecorded",
)


class ServiceError(Exception):
    def __init__(self, status: int, code: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.code = code
        self.detail = detail


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class TrialResource:
    trial_id: str
    config: EngineConfig
    engine: TrialEngine
    created_at: str
    updated_at: str
    last_seq: int
    log_path: Path
    lock: threading.Lock
    recovery_note: Optional[str] = None


def _config_payload(config: EngineConfig) -> dict:
    return {
        "objective": config.objective.value,
        "burn_in": config.burn_in,
        "gamma_a": config.gamma_a,
        "gamma_b": config.gamma_b,
        "gamma_source": config.gamma_source,
        "seed": config.seed,
    }


def _config_from_payload(payload: dict) -> EngineConfig:
    return EngineConfig(
        objective=ObjectiveKind.parse(payload["objective"]),
        burn_in=int(payload["burn_in"]),
        gamma_a=payload.get("gamma_a"),
        gamma_b=payload.get("gamma_b"),
        gamma_source=payload.get("gamma_source", "known"),
        seed=int(payload.get("seed", 0)),
        retain_patients=True,
    )


def _finite_or_none(value: float) -> Optional[float]:
    return value if isinstance(value, (int, float)) and math.isfinite(value) else None


def build_snapshot(resource: TrialResource) -> dict:
    """The read model: everything a console needs, no server-side secrets."""
    engine = resource.engine
    estimates = engine.current_ratio_estimates()
    triple = estimates.triple
    return {
        "trial_id": resource.trial_id,
        "created_at": resource.created_at,
        "updated_at": resource.updated_at,
        "last_seq": resource.last_seq,
        "config": _config_payload(resource.config),
        "patients_enrolled": engine.next_patient_index - 1,
        "outcomes_recorded": engine.outcomes_recorded,
        "cells": {
            name: {"count": engine.counts[k], "successes": engine.successes[k]}
            for k, name in enumerate(CELL_NAMES)
        },
        "ratios": {
            "tau_a": {"estimate": triple.tau_a, "ase": _finite_or_none(estimates.ase_tau_a)},
            "tau_ac": {"estimate": triple.tau_ac, "ase": _finite_or_none(estimates.ase_tau_ac)},
            "tau_be": {"estimate": triple.tau_be, "ase": _finite_or_none(estimates.ase_tau_be)},
        },
        "estimates_complete": estimates.complete,
        "stage1_probability": engine.stage1_probability(),
        "failure_series": engine.failure_series,
        "dtr_counts": engine.dtr_counts(),
    }


def snapshot_bytes(snapshot: dict) -> bytes:
    return json.dumps(snapshot, sort_keys=True, allow_nan=False).encode()


# ---------------------------------------------------------------------------
# Event log.
# ---------------------------------------------------------------------------

class EventLog:
    """Append-only NDJSON event file with contiguous sequence numbers."""

    def __init__(self, path: Path):
        self.path = path

    def append(self, seq: int, kind: str, payload: dict, draw: Optional[float], ts: str) -> None:
        line = json.dumps(
            {"seq": seq, "kind": kind, "payload": payload, "draw": draw, "ts": ts},
            sort_keys=True,
        )
        with open(self.path, "a", encoding="utf-8") as handle:
            handle.write(line + "\n")
            handle.flush()
            os.fsync(handle.fileno())

    def read(self) -> tuple[list[dict], Optional[str]]:
        """All complete events plus a note when a trailing record was dropped."""
        events: list[dict] = []
        note = None
        with open(self.path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                stripped = line.strip()
                if not stripped:
                    continue
                try:
                    event = json.loads(stripped)
                except json.JSONDecodeError:
                    note = f"dropped corrupt record at line {line_no}; recovered prefix"
                    break
                if event.get("seq") != len(events) + 1 or event.get("kind") not in EVENT_KINDS:
                    note = f"dropped inconsistent record at line {line_no}; recovered prefix"
                    break
                events.append(event)
        return events, note


def recover_trial(log_path: str | Path) -> TrialResource:
    """Rebuild a trial from its event log without consuming any randomness."""
    log_path = Path(log_path)
    events, note = EventLog(log_path).read()
    if not events or events[0]["kind"] != "TrialCreated":
        raise ServiceError(422, "invalid_config", f"{log_path} holds no creation event")
    created = events[0]
    config = _config_from_payload(created["payload"])
    engine = TrialEngine(config)
    draws = 0
    for event in events:
        kind, payload = event["kind"], event["payload"]
        if kind == "Stage1Assigned":
            engine.apply_enrollment(payload["patient_id"], payload["arm"])
            draws += 1
        elif kind == "ResponseRecorded":
            engine.apply_response(payload["patient_id"], payload["responder"])
        elif kind == "Stage2Assigned":
            engine.apply_stage2(payload["patient_id"], payload["option"])
            draws += 1
        elif kind == "OutcomeRecorded":
            engine.apply_outcome(payload["patient_id"], payload["success"])
    engine.restore_draw_position(draws)
    return TrialResource(
        trial_id=created["payload"]["trial_id"],
        config=config,
        engine=engine,
        created_at=created["ts"],
        updated_at=events[-1]["ts"],
        last_seq=events[-1]["seq"],
        log_path=log_path,
        lock=threading.Lock(),
        recovery_note=note,
    )


# ---------------------------------------------------------------------------
# Store: all trials under one data directory.
# ---------------------------------------------------------------------------

class TrialStore:
    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._trials: dict[str, TrialResource] = {}
        self._registry_lock = threading.Lock()
        for log_path in sorted(self.data_dir.glob("*.ndjson")):
            try:
                resource = recover_trial(log_path)
            except ServiceError:
                continue
            self._trials[resource.trial_id] = resource

    def _get(self, trial_id: str) -> TrialResource:
        try:
            return self._trials[trial_id]
        except KeyError:
            raise ServiceError(404, "unknown_trial", f"no trial {trial_id!r}") from None

    def _emit(
        self,
        resource: TrialResource,
        kind: str,
        payload: dict,
        draw: Optional[float] = None,
    ) -> None:
        resource.last_seq += 1
        resource.updated_at = _now()
        EventLog(resource.log_path).append(
            resource.last_seq, kind, payload, draw, resource.updated_at
        )

    def create_trial(self, body: dict) -> dict:
        try:
            config = EngineConfig(
                objective=ObjectiveKind.parse(body.get("objective", "diff")),
                burn_in=int(body.get("burn_in", 30)),
                gamma_a=body.get("gamma_a"),
                gamma_b=body.get("gamma_b"),
                gamma_source=body.get("gamma_source", "known"),
                seed=int(body["seed"]) if body.get("seed") is not None
                else int.from_bytes(os.urandom(8), "big"),
                retain_patients=True,
            )
        except DomainError as err:
            raise ServiceError(422, "invalid_config", str(err)) from None
        trial_id = uuid.uuid4().hex[:12]
        resource = TrialResource(
            trial_id=trial_id,
            config=config,
            engine=TrialEngine(config),
            created_at=_now(),
            updated_at="",
            last_seq=0,
            log_path=self.data_dir / f"{trial_id}.ndjson",
            lock=threading.Lock(),
        )
        with self._registry_lock:
            self._trials[trial_id] = resource
        with resource.lock:
            resource.updated_at = resource.created_at
            EventLog(resource.log_path).append(
                1,
                "TrialCreated",
                {"trial_id": trial_id, **_config_payload(config)},
                None,
                resource.created_at,
            )
            resource.last_seq = 1
        return {"trial_id": trial_id, "config": _config_payload(config)}

    def enroll(self, trial_id: str) -> dict:
        resource = self._get(trial_id)
        with resource.lock:
            engine = resource.engine
            patient_id, arm, probability, draw = engine.enroll()
            self._emit(resource, "PatientEnrolled", {"patient_id": patient_id})
            self._emit(
                resource,
                "Stage1Assigned",
                {"patient_id": patient_id, "arm": arm, "probability": probability},
                draw,
            )
            return {"patient_id": patient_id, "stage1": arm, "probability": probability}

    def record_response(self, trial_id: str, patient_id: int, responder: bool) -> dict:
        resource = self._get(trial_id)
        with resource.lock:
            engine = resource.engine
            try:
                engine.record_response(patient_id, responder)
            except UnknownPatientError:
                raise ServiceError(404, "unknown_patient", f"no patient {patient_id}") from None
            except InvalidTransitionError as err:
                raise ServiceError(409, "invalid_transition", str(err)) from None
            self._emit(
                resource,
                "ResponseRecorded",
                {"patient_id": patient_id, "responder": bool(responder)},
            )
            if responder:
                return {"patient_id": patient_id, "responder": True, "stage2": "CONT"}
            option, probability, draw = engine.assign_stage2(patient_id)
            self._emit(
                resource,
                "Stage2Assigned",
                {"patient_id": patient_id, "option": option, "probability": probability},
                draw,
            )
            return {
                "patient_id": patient_id,
                "responder": False,
                "stage2": option,
                "probability": probability,
            }

    def record_outcome(self, trial_id: str, patient_id: int, success: bool) -> dict:
        resource = self._get(trial_id)
        with resource.lock:
            engine = resource.engine
            try:
                record = engine.record_outcome(patient_id, success)
            except UnknownPatientError:
                raise ServiceError(404, "unknown_patient", f"no patient {patient_id}") from None
            except InvalidTransitionError as err:
                raise ServiceError(409, "invalid_transition", str(err)) from None
            self._emit(
                resource,
                "OutcomeRecorded",
                {"patient_id": patient_id, "success": bool(success)},
            )
            return {
                "patient_id": patient_id,
                "recorded": True,
                "cell": f"{record.stage1}{record.stage2}",
            }

    def snapshot(self, trial_id: str) -> dict:
        resource = self._get(trial_id)
        with resource.lock:
            return build_snapshot(resource)

    def compare(self, trial_id: str, di: str, dj: str) -> dict:
        resource = self._get(trial_id)
        with resource.lock:
            try:
                result = wald_test(resource.engine, DtrId.parse(di), DtrId.parse(dj))
            except InsufficientDataError as err:
                raise ServiceError(409, "insufficient_data", str(err)) from None
            except DomainError as err:
                raise ServiceError(422, "invalid_config", str(err)) from None
        return {
            "di": di,
            "dj": dj,
            "z": result.z,
            "p_value": result.p_value,
            "p_di": result.p_di,
            "p_dj": result.p_dj,
            "se_diff": result.se_diff,
        }


# ---------------------------------------------------------------------------
# HTTP layer.
# ---------------------------------------------------------------------------

class CreateTrialBody(BaseModel):
    objective: str = "diff"
    burn_in: int = 30
    gamma_a: Optional[float] = None
    gamma_b: Optional[float] = None
    gamma_source: str = "known"
    seed: Optional[int] = None


class ResponseBody(BaseModel):
    responder: bool = Field(...)


class OutcomeBody(BaseModel):
    success: bool = Field(...)


def create_app(data_dir: str | Path) -> FastAPI:
    app = FastAPI(title="smart-alloc trial service")
    store = TrialStore(data_dir)
    app.state.store = store

    @app.exception_handler(ServiceError)
    async def _service_error(_: Request, err: ServiceError) -> JSONResponse:
        return JSONResponse(status_code=err.status, content={"code": err.code, "detail": err.detail})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_: Request, err: RequestValidationError) -> JSONResponse:
        return JSONResponse(
            status_code=422, content={"code": "invalid_config", "detail": str(err.errors())}
        )

    @app.middleware("http")
    async def _require_json(request: Request, call_next):
        if request.method == "POST":
            body = await request.body()
            if body:
                content_type = request.headers.get("content-type", "")
                if not content_type.lower().startswith("application/json"):
                    return JSONResponse(
                        status_code=415,
                        content={
                            "code": "invalid_content_type",
                            "detail": "request bodies must be application/json",
                        },
                    )
        return await call_next(request)

    @app.post("/trials", status_code=201)
    def create_trial(body: CreateTrialBody) -> dict:
        return store.create_trial(body.model_dump())

    @app.post("/trials/{trial_id}/patients", status_code=201)
    def enroll(trial_id: str) -> dict:
        return store.enroll(trial_id)

    @app.post("/trials/{trial_id}/patients/{patient_id}/response")
    def response(trial_id: str, patient_id: int, body: ResponseBody) -> dict:
        return store.record_response(trial_id, patient_id, body.responder)

    @app.post("/trials/{trial_id}/patients/{patient_id}/outcome")
    def outcome(trial_id: str, patient_id: int, body: OutcomeBody) -> dict:
        return store.record_outcome(trial_id, patient_id, body.success)

    @app.get("/trials/{trial_id}/state")
    def state(trial_id: str) -> dict:
        return store.snapshot(trial_id)

    @app.get("/trials/{trial_id}/compare")
    def compare(trial_id: str, di: str, dj: str) -> dict:
        return store.compare(trial_id, di, dj)

    return app
