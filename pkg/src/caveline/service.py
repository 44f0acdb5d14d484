"""HTTP review service: serves pending predictions with overlays, accepts
verdicts, triggers phase advances, and reports phase metrics.

All label semantics stay in the weaksup module; this layer only validates,
persists, and serializes. Verdicts are written to the append-only log before
they are acknowledged, so a restart recovers the last durable state.
"""

from __future__ import annotations

import io
import threading
import uuid
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.exceptions import RequestValidationError
from pydantic import BaseModel

from .data import WORK_H, WORK_W, render_polyline_mask, save_image, load_mask
from .errors import NothingNew
from .postproc import dominant_line, render_overlay
from .weaksup import (Decision, PhaseState, Verdict, WeaksupConfig,
                      emit_review_batch, ingest_verdicts, advance_phase)


class VerdictBody(BaseModel):
    sample_id: str
    decision: str
    polyline: Optional[list[list[float]]] = None
    brush_width: int = 4
    session_id: str = "default"
    reviewer: str = "anonymous"


class ServiceState:
    def __init__(self, root: Path, config: WeaksupConfig):
        self.root = Path(root)
        self.config = config
        self.state = PhaseState.load(self.root)
        self.lock = threading.Lock()  # serializes verdict ingestion and training
        self.training = False
        self.jobs: dict[str, dict] = {}
        self.applied: dict[tuple[str, str], dict] = {}  # (session, sample) -> original result

    def phase_summary(self) -> dict:
        s = self.state
        return {
            "index": s.phase_index,
            "pools": {
                "labeled": len(s.labeled_pool),
                "weak": len(s.weak_pool),
                "negative": len(s.negative_pool),
                "pending": len(s.pending_pool),
            },
            "metrics": None
            if s.metrics is None
            else {"iou": s.metrics.iou, "f1": s.metrics.f1},
        }

    def ensure_review_assets(self) -> None:
        """Predict pending samples and pre-render overlays once per phase."""
        s = self.state
        pred_dir = self.root / f"phase{s.phase_index}" / "predictions"
        missing = [sid for sid in s.pending_pool if not (pred_dir / f"{sid}.png").exists()]
        if not missing:
            return
        items = emit_review_batch(s, self.config)
        overlay_dir = self.root / f"phase{s.phase_index}" / "overlays"
        overlay_dir.mkdir(parents=True, exist_ok=True)
        for item in items:
            save_image(overlay_dir / f"{item.sample_id}.png",
                       render_overlay(item.image, item.predicted_mask, item.dominant))


def _png_response(path: Path) -> Response:
    if not path.exists():
        return JSONResponse({"error": f"{path.name} not found"}, status_code=404)
    return Response(path.read_bytes(), media_type="image/png")


def create_app(root: Path | str, config: WeaksupConfig) -> FastAPI:
    svc = ServiceState(Path(root), config)
    app = FastAPI(title="caveline review service")
    app.state.svc = svc

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse({"error": "malformed request", "detail": exc.errors()}, status_code=400)

    @app.get("/phases")
    def phases():
        out = []
        for k in range(1, svc.state.phase_index):
            summary_path = svc.root / f"phase{k}" / "summary.json"
            if summary_path.exists():
                import json

                out.append(json.loads(summary_path.read_text()))
        out.append(svc.phase_summary())
        return {"phases": out}

    @app.get("/phases/{k}/pending")
    def pending(k: int, offset: int = 0, limit: int = 50):
        if k != svc.state.phase_index:
            return JSONResponse({"error": "stale phase"}, status_code=409)
        if svc.training:
            return JSONResponse({"error": "phase is training"}, status_code=423)
        svc.ensure_review_assets()
        ids = sorted(svc.state.pending_pool)[offset : offset + limit]
        manifest = svc.state.manifest()
        page = []
        for sid in ids:
            mask = load_mask(svc.root / f"phase{svc.state.phase_index}" / "predictions" / f"{sid}.png")
            dom = dominant_line(mask, config.hough)
            page.append(
                {
                    "sample_id": sid,
                    "image_url": f"/samples/{sid}/image",
                    "mask_url": f"/samples/{sid}/mask",
                    "overlay_url": f"/samples/{sid}/overlay",
                    "dominant_line": None if dom is None else dom.to_dict(),
                }
            )
        return {"total": len(svc.state.pending_pool), "offset": offset, "items": page}

    @app.get("/samples/{sid}/image")
    def sample_image(sid: str):
        try:
            entry = svc.state.manifest().entry(sid)
        except KeyError:
            return JSONResponse({"error": "unknown sample"}, status_code=404)
        return _png_response((svc.state.manifest().root / entry.image).resolve())

    @app.get("/samples/{sid}/mask")
    def sample_mask(sid: str):
        return _png_response(svc.root / f"phase{svc.state.phase_index}" / "predictions" / f"{sid}.png")

    @app.get("/samples/{sid}/overlay")
    def sample_overlay(sid: str):
        return _png_response(svc.root / f"phase{svc.state.phase_index}" / "overlays" / f"{sid}.png")

    @app.post("/phases/{k}/verdicts")
    def post_verdicts(k: int, body: list[VerdictBody]):
        if k != svc.state.phase_index:
            return JSONResponse({"error": "stale phase"}, status_code=409)
        if svc.training:
            return JSONResponse({"error": "phase is training"}, status_code=423)
        with svc.lock:
            results = []
            to_apply: list[Verdict] = []
            manifest_ids = set(svc.state.manifest().ids)
            for vb in body:
                key = (vb.session_id, vb.sample_id)
                if key in svc.applied:
                    results.append(svc.applied[key])  # idempotent replay
                    continue
                if vb.sample_id not in manifest_ids:
                    return JSONResponse({"error": f"unknown sample {vb.sample_id}"}, status_code=404)
                if vb.sample_id not in svc.state.pending_pool:
                    return JSONResponse(
                        {"error": f"sample {vb.sample_id} already decided"}, status_code=409
                    )
                try:
                    decision = Decision(vb.decision)
                except ValueError:
                    return JSONResponse({"error": f"bad decision {vb.decision}"}, status_code=400)
                corrected = None
                if decision == Decision.REJECT_WITH_ANNOTATION:
                    if not vb.polyline or len(vb.polyline) < 2:
                        return JSONResponse(
                            {"error": "annotation requires a polyline of >= 2 points"}, status_code=400
                        )
                    corrected = render_polyline_mask(
                        np.asarray(vb.polyline), vb.brush_width, size=(WORK_H, WORK_W)
                    )
                to_apply.append(Verdict(vb.sample_id, decision, corrected, reviewer=vb.reviewer))
                results.append({"sample_id": vb.sample_id, "decision": decision.value, "applied": True})
            if to_apply:
                ingest_verdicts(svc.state, to_apply)
            for vb, res in zip(body, results):
                svc.applied.setdefault((vb.session_id, vb.sample_id), res)
        summary = svc.phase_summary()
        return {"results": results, "pools": summary["pools"]}

    @app.post("/phases/{k}/advance")
    def advance(k: int):
        if k != svc.state.phase_index:
            return JSONResponse({"error": "stale phase"}, status_code=409)
        if svc.training:
            return JSONResponse({"error": "advance already running"}, status_code=423)
        job_id = uuid.uuid4().hex
        svc.jobs[job_id] = {"status": "running"}

        def run():
            import json

            try:
                with svc.lock:
                    snapshot = svc.phase_summary()
                    (svc.root / f"phase{svc.state.phase_index}").mkdir(exist_ok=True)
                    (svc.root / f"phase{svc.state.phase_index}" / "summary.json").write_text(
                        json.dumps(snapshot)
                    )
                    advance_phase(svc.state, svc.config)
                svc.jobs[job_id] = {"status": "done", "phase_index": svc.state.phase_index}
            except NothingNew as exc:
                svc.jobs[job_id] = {"status": "failed", "error": str(exc)}
            except Exception as exc:  # surfaced through the job status
                svc.jobs[job_id] = {"status": "failed", "error": repr(exc)}
            finally:
                svc.training = False

        svc.training = True
        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def job(job_id: str):
        if job_id not in svc.jobs:
            return JSONResponse({"error": "unknown job"}, status_code=404)
        return svc.jobs[job_id]

    @app.get("/phases/{k}/export")
    def export(k: int):
        samples = []
        for entry in svc.state.verdict_log:
            if entry["phase"] != k:
                continue
            sid = entry["sample_id"]
            if entry["verdict"] == Decision.ACCEPT.value and sid in svc.state.weak_masks:
                samples.append(
                    {
                        "id": sid,
                        "mask": svc.state.weak_masks[sid]["mask"],
                        "label_kind": "WEAK_POSITIVE",
                        "checkpoint": svc.state.weak_masks[sid]["checkpoint"],
                    }
                )
            elif entry["verdict"] == Decision.REJECT_WITH_ANNOTATION.value and sid in svc.state.corrected_masks:
                samples.append(
                    {
                        "id": sid,
                        "mask": svc.state.corrected_masks[sid],
                        "label_kind": "NEGATIVE_RELABELED",
                    }
                )
        return {"phase": k, "samples": samples}

    return app
