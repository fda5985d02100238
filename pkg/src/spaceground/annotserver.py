"""Annotation server: REST API over a benchmark manifest plus the static
web annotator.

Ground-truth updates rewrite only the affected manifest line and land via
write-temp-then-rename, so a crash never corrupts the manifest. Concurrent
writes are serialized; the last write per sample wins.
"""

from __future__ import annotations

import base64
import json
import os
import tempfile
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import HTMLResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .benchmark import GroundingSample, load_dataset

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>annotator</title></head>
<body>
<h1>Annotation API is running</h1>
<p>The web annotator frontend is not built. Build it with
<code>npm install && npm run build</code> inside <code>frontend/</code> and
restart with <code>--static-dir frontend/dist</code>, or call the API
directly: GET /api/samples, GET /api/sample/{id},
PUT /api/sample/{id}/labels.</p>
</body></html>"""


class LabelsUpdate(BaseModel):
    gt_superpixels: list[int]


class ManifestStore:
    """In-memory view of the manifest with atomic line-level persistence."""

    def __init__(self, manifest: Path):
        self.manifest = Path(manifest)
        self.lock = threading.Lock()
        self.samples: dict[str, GroundingSample] = {
            s.id: s for s in load_dataset(self.manifest)
        }
        self.order = list(self.samples)

    def update_labels(self, sid: str, ids: list[int]) -> GroundingSample:
        with self.lock:
            sample = self.samples[sid]
            lines = self.manifest.read_text().splitlines()
            for i, line in enumerate(lines):
                if not line.strip():
                    continue
                doc = json.loads(line)
                if doc.get("id") == sid:
                    doc["gt_superpixels"] = list(ids)
                    lines[i] = json.dumps(doc)
                    break
            else:
                raise KeyError(sid)
            fd, tmp = tempfile.mkstemp(dir=self.manifest.parent, suffix=".jsonl")
            try:
                with os.fdopen(fd, "w") as fh:
                    fh.write("\n".join(lines) + "\n")
                os.replace(tmp, self.manifest)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
            updated = GroundingSample(
                **{**vars(sample), "gt_superpixels": tuple(ids)}
            )
            self.samples[sid] = updated
            return updated


def create_app(manifest: str | Path, static_dir: str | Path | None = None) -> FastAPI:
    store = ManifestStore(Path(manifest))
    app = FastAPI(title="spaceground annotator")

    @app.get("/api/samples")
    def list_samples():
        return [
            {
                "id": s.id,
                "instruction": s.instruction,
                "category": s.category,
                "split": s.split,
                "n_selected": len(s.gt_superpixels),
                "annotated": len(s.gt_superpixels) > 0,
            }
            for s in (store.samples[sid] for sid in store.order)
        ]

    @app.get("/api/sample/{sid}")
    def get_sample(sid: str):
        sample = store.samples.get(sid)
        if sample is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sid!r}")
        image_bytes = sample.resolve(sample.image).read_bytes()
        labels_bytes = sample.resolve(sample.labels_png).read_bytes()
        sp = sample.load_superpixels()
        h, w = sp.shape
        return {
            "id": sample.id,
            "instruction": sample.instruction,
            "category": sample.category,
            "width": w,
            "height": h,
            "L": sample.superpixel_count,
            "gt_superpixels": list(sample.gt_superpixels),
            "image_png": base64.b64encode(image_bytes).decode("ascii"),
            "labels_png": base64.b64encode(labels_bytes).decode("ascii"),
        }

    @app.put("/api/sample/{sid}/labels")
    def put_labels(sid: str, update: LabelsUpdate):
        sample = store.samples.get(sid)
        if sample is None:
            raise HTTPException(status_code=404, detail=f"unknown sample {sid!r}")
        ids = sorted(set(update.gt_superpixels))
        if not ids:
            raise HTTPException(status_code=400, detail="a sample needs a nonempty target region")
        bad = [i for i in ids if not 0 <= i < sample.superpixel_count]
        if bad:
            raise HTTPException(
                status_code=400,
                detail=f"superpixel ids {bad} outside [0, {sample.superpixel_count})",
            )
        updated = store.update_labels(sid, ids)
        return {"id": sid, "gt_superpixels": list(updated.gt_superpixels)}

    resolved_static = Path(static_dir) if static_dir else Path("frontend/dist")
    if resolved_static.is_dir():
        app.mount("/", StaticFiles(directory=resolved_static, html=True), name="static")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return _FALLBACK_PAGE

    return app
