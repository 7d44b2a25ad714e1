"""HTTP service for the web studio: scene CRUD with immutable revisions,
single-instant shadow previews, and asynchronous simulation jobs.

Persistence is plain files under a data directory:
  scenes/<sid>/rev_<n>.json   immutable scene revisions
  jobs/<jid>/meta.json        job state (atomic rewrite)
  jobs/<jid>/report.csv       written when done
  jobs/<jid>/heatmap.csv

Scene mutation is serialized per scene id; revision numbers are gapless.
A job snapshots the revision it was submitted against and is unaffected by
later PATCHes.
"""

from __future__ import annotations

import json
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware

from .engine import (
    SimulationConfig,
    WeatherSource,
    build_heatmap,
    heatmap_to_csv,
    instant_to_json_dict,
    report_to_csv,
    simulate_instant,
    simulate_period,
)
from .geometry import GeometryError
from .irradiance import WeatherError, load_weather
from .scene import SceneError, scene_from_dict
from .solarpos import SolarRangeError, sun_position
from .timeparse import TimeParseError, parse_duration, parse_instant

__all__ = ["create_app", "SceneStore", "JobRunner"]

_VEC_FIELDS = ("translation_m", "rotation_deg", "scale")


def _validate_vec(name: str, value) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise PatchError(name, f"{name} must be a 3-element array")
    out = []
    for i, x in enumerate(value):
        if not isinstance(x, (int, float)) or isinstance(x, bool) or not np.isfinite(x):
            raise PatchError(f"{name}[{i}]", f"{name}[{i}] must be a finite number")
        if name == "scale" and x <= 0:
            raise PatchError(f"{name}[{i}]", f"{name}[{i}] must be > 0")
        out.append(float(x))
    return out


class PatchError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(message)
        self.field = field


class SceneStore:
    """Disk-backed scene revisions with per-scene write serialization."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._mesh_cache: dict[str, object] = {}

    def _lock_for(self, sid: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(sid, threading.Lock())

    def _scene_dir(self, sid: str) -> Path:
        return self.root / sid

    def _rev_path(self, sid: str, rev: int) -> Path:
        return self._scene_dir(sid) / f"rev_{rev:05d}.json"

    def latest_revision(self, sid: str) -> int:
        d = self._scene_dir(sid)
        if not d.exists():
            raise KeyError(sid)
        revs = sorted(int(p.stem.split("_")[1]) for p in d.glob("rev_*.json"))
        if not revs:
            raise KeyError(sid)
        return revs[-1]

    def load(self, sid: str, rev: int | None = None) -> tuple[dict, int]:
        r = self.latest_revision(sid) if rev is None else rev
        p = self._rev_path(sid, r)
        if not p.exists():
            raise KeyError(f"{sid}@{r}")
        return json.loads(p.read_text()), r

    def build_scene(self, doc: dict):
        """Domain Scene from a document (validates geometry + wiring).

        Parsed meshes are cached by resolved path; scene documents are small,
        meshes are not.
        """
        from .geometry import parse_obj

        meshes = {}
        for od in doc.get("objects", []):
            op = od.get("obj_path")
            if op is None:
                continue
            p = Path(op)
            if not p.is_absolute():
                p = self.root / p
            key = str(p)
            if key not in self._mesh_cache:
                if not p.exists():
                    raise SceneError(f"OBJ file not found: {p}")
                self._mesh_cache[key] = parse_obj(p.read_text())
            meshes[op] = self._mesh_cache[key]
        return scene_from_dict(doc, base_dir=self.root, meshes=meshes)

    def create(self, doc: dict) -> tuple[str, int]:
        sid = doc.get("id") or uuid.uuid4().hex[:12]
        with self._lock_for(sid):
            if self._scene_dir(sid).exists():
                raise FileExistsError(sid)
            self.build_scene(doc)  # validate before persisting
            self._scene_dir(sid).mkdir(parents=True)
            self._rev_path(sid, 1).write_text(json.dumps(doc, indent=1))
            return sid, 1

    def patch_object(self, sid: str, oid: str, patch: dict) -> int:
        return self._patch(sid, "objects", oid, patch)

    def patch_generator(self, sid: str, gid: str, patch: dict) -> int:
        return self._patch(sid, "generators", gid, patch)

    def _patch(self, sid: str, section: str, item_id: str, patch: dict) -> int:
        with self._lock_for(sid):
            doc, rev = self.load(sid)
            items = doc.get(section, [])
            target = next((x for x in items if x.get("id") == item_id), None)
            if target is None:
                raise KeyError(item_id)
            for key, value in patch.items():
                if section == "objects":
                    if key not in (*_VEC_FIELDS, "visible"):
                        raise PatchError(key, f"object field {key!r} is not patchable")
                    if key == "visible":
                        if not isinstance(value, bool):
                            raise PatchError(key, "visible must be a boolean")
                        target[key] = value
                    else:
                        target[key] = _validate_vec(key, value)
                else:
                    if key == "id":
                        raise PatchError(key, "generator id is immutable")
                    target[key] = value
            self.build_scene(doc)  # full revalidation before the new revision
            new_rev = rev + 1
            self._rev_path(sid, new_rev).write_text(json.dumps(doc, indent=1))
            return new_rev


class JobRunner:
    """Background simulation jobs with file-backed state."""

    def __init__(self, root: Path, store: SceneStore, engine_workers: int = 0):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.store = store
        self.engine_workers = engine_workers
        self._pool = ThreadPoolExecutor(max_workers=2)
        self._meta_lock = threading.Lock()

    def _dir(self, jid: str) -> Path:
        return self.root / jid

    def _write_meta(self, jid: str, meta: dict):
        with self._meta_lock:
            tmp = self._dir(jid) / "meta.json.tmp"
            tmp.write_text(json.dumps(meta, indent=1))
            tmp.replace(self._dir(jid) / "meta.json")

    def meta(self, jid: str) -> dict:
        p = self._dir(jid) / "meta.json"
        if not p.exists():
            raise KeyError(jid)
        return json.loads(p.read_text())

    def submit(self, sid: str, params: dict) -> str:
        doc, rev = self.store.load(sid)  # snapshot now
        jid = uuid.uuid4().hex[:12]
        self._dir(jid).mkdir(parents=True)
        meta = {
            "job_id": jid,
            "scene_id": sid,
            "revision": rev,
            "params": params,
            "state": "queued",
            "progress": 0.0,
            "error": None,
        }
        self._write_meta(jid, meta)
        self._pool.submit(self._run, jid, doc, meta)
        return jid

    def _run(self, jid: str, doc: dict, meta: dict):
        meta["state"] = "running"
        self._write_meta(jid, meta)
        try:
            params = meta["params"]
            scene = self.store.build_scene(doc)
            start = parse_instant(params["from"])
            end = parse_instant(params["to"])
            step = parse_duration(params.get("step", "10m"))
            mode = params.get("weather_mode", "clear_sky")
            if mode == "clear_sky":
                weather = WeatherSource("clear_sky")
            else:
                csv_path = Path(params["weather_csv_path"])
                weather = WeatherSource(mode, load_weather(csv_path.read_text()))
            config = SimulationConfig(
                resolution=int(params.get("resolution", SimulationConfig.resolution)),
                albedo=float(params.get("albedo", SimulationConfig.albedo)),
                temperature_model=params.get("temperature_model", "constant"),
                workers=self.engine_workers,
            )

            def progress(done, total):
                meta["progress"] = done / total if total else 1.0
                self._write_meta(jid, meta)

            results, report = simulate_period(
                scene, weather, start, end, step, config, progress=progress
            )
            (self._dir(jid) / "report.csv").write_text(report_to_csv(report))
            if results:
                (self._dir(jid) / "heatmap.csv").write_text(
                    heatmap_to_csv(build_heatmap(results))
                )
            meta["state"] = "done"
            meta["progress"] = 1.0
            self._write_meta(jid, meta)
        except Exception as exc:  # surfaced through the job state
            meta["state"] = "failed"
            meta["error"] = f"{type(exc).__name__}: {exc}"
            self._write_meta(jid, meta)


def create_app(data_dir: str | Path = "helios-data", workers: int = 0) -> FastAPI:
    root = Path(data_dir)
    store = SceneStore(root / "scenes")
    jobs = JobRunner(root / "jobs", store, engine_workers=workers)

    app = FastAPI(title="helios", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.store = store
    app.state.jobs = jobs

    def _http_error(exc: Exception) -> HTTPException:
        if isinstance(exc, KeyError):
            return HTTPException(404, detail=str(exc))
        if isinstance(exc, PatchError):
            return HTTPException(422, detail={"field": exc.field, "message": str(exc)})
        if isinstance(exc, (SceneError, GeometryError, WeatherError, TimeParseError)):
            return HTTPException(422, detail=str(exc))
        raise exc

    @app.post("/scenes")
    async def post_scene(request: Request):
        doc = await request.json()
        try:
            sid, rev = store.create(doc)
        except FileExistsError as exc:
            raise HTTPException(409, detail=f"scene {exc} already exists") from None
        except Exception as exc:
            raise _http_error(exc) from None
        return {"scene_id": sid, "revision": rev}

    @app.get("/scenes/{sid}")
    def get_scene(sid: str):
        try:
            doc, rev = store.load(sid)
        except KeyError as exc:
            raise HTTPException(404, detail=f"unknown scene {exc}") from None
        return {"scene_id": sid, "revision": rev, "scene": doc}

    @app.patch("/scenes/{sid}/objects/{oid}")
    async def patch_object(sid: str, oid: str, request: Request):
        patch = await request.json()
        try:
            rev = store.patch_object(sid, oid, patch)
        except Exception as exc:
            raise _http_error(exc) from None
        return {"scene_id": sid, "revision": rev}

    @app.patch("/scenes/{sid}/generators/{gid}")
    async def patch_generator(sid: str, gid: str, request: Request):
        patch = await request.json()
        try:
            rev = store.patch_generator(sid, gid, patch)
        except Exception as exc:
            raise _http_error(exc) from None
        return {"scene_id": sid, "revision": rev}

    @app.get("/scenes/{sid}/shadows")
    def get_shadows(sid: str, at: str, generator: str):
        try:
            doc, rev = store.load(sid)
            scene = store.build_scene(doc)
            gen = scene.generator(generator)
            instant = parse_instant(at)
        except KeyError as exc:
            raise HTTPException(404, detail=f"unknown scene {exc}") from None
        except SceneError as exc:
            raise HTTPException(404, detail=str(exc)) from None
        except TimeParseError as exc:
            raise HTTPException(422, detail=str(exc)) from None
        sun = sun_position(scene.site, instant)
        if sun.zenith_deg >= 90.0:
            raise HTTPException(409, detail=f"sun below horizon at {instant.isoformat()}")
        config = SimulationConfig(workers=1)
        result = simulate_instant(scene, WeatherSource("clear_sky"), instant, config)
        payload = instant_to_json_dict(result)
        payload["scene_id"] = sid
        payload["revision"] = rev
        payload["generator"] = gen.id
        return payload

    @app.post("/scenes/{sid}/jobs")
    async def post_job(sid: str, request: Request):
        params = await request.json()
        for key in ("from", "to"):
            if key not in params:
                raise HTTPException(422, detail=f"missing job parameter {key!r}")
        try:
            jid = jobs.submit(sid, params)
        except KeyError as exc:
            raise HTTPException(404, detail=f"unknown scene {exc}") from None
        return {"job_id": jid}

    @app.get("/jobs/{jid}")
    def get_job(jid: str):
        try:
            return jobs.meta(jid)
        except KeyError:
            raise HTTPException(404, detail=f"unknown job {jid}") from None

    def _job_file(jid: str, name: str) -> Response:
        try:
            meta = jobs.meta(jid)
        except KeyError:
            raise HTTPException(404, detail=f"unknown job {jid}") from None
        if meta["state"] != "done":
            raise HTTPException(409, detail=f"job {jid} is {meta['state']}")
        path = jobs._dir(jid) / name
        if not path.exists():
            raise HTTPException(404, detail=f"{name} not produced")
        return Response(content=path.read_bytes(), media_type="text/csv")

    @app.get("/jobs/{jid}/report")
    def get_report(jid: str):
        return _job_file(jid, "report.csv")

    @app.get("/jobs/{jid}/heatmap")
    def get_heatmap(jid: str):
        return _job_file(jid, "heatmap.csv")

    return app
