"""HTTP render service: GET /meta (JSON), POST /render (PNG), GET /render
mirror for simple clients. PNG responses carry X-Render-Millis; CORS headers
let the browser viewer talk to the service from another origin.

The CLI render path goes through the same RenderService.render_png, so
service bytes and `volvid render` bytes are identical for equal requests.
"""

import io
import json
import os
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

import numpy as np
from PIL import Image

from .. import occupancy
from ..renderer import Camera, RenderOptions, render_image


class RequestError(ValueError):
    """Maps to HTTP 400."""


class FrameNotFound(LookupError):
    """Maps to HTTP 404."""


def _floats(val, n, name):
    try:
        parts = [float(x) for x in (val.split(",") if isinstance(val, str) else val)]
    except (TypeError, ValueError):
        raise RequestError(f"{name}: expected {n} comma-separated numbers")
    if len(parts) != n:
        raise RequestError(f"{name}: expected {n} values, got {len(parts)}")
    return parts


@dataclass
class RenderRequest:
    frame: int
    width: int = 256
    height: int = 256
    fov_deg: float = 45.0
    use_ess: bool = True
    two_stage: bool = True
    # pose: exactly one source wins, in this priority order
    rt: object = None  # 3x4 world-from-camera
    position: object = None
    look_at: object = None
    up: object = None
    azimuth: float = 0.0
    elevation: float = 15.0
    radius: float = 0.0  # 0 means "meta default"

    @classmethod
    def from_dict(cls, d: dict):
        if "frame" not in d:
            raise RequestError("missing required field 'frame'")
        try:
            frame = int(d["frame"])
        except (TypeError, ValueError):
            raise RequestError(f"frame must be an integer, got {d['frame']!r}")
        req = cls(frame=frame)
        for k in ("width", "height"):
            if k in d:
                try:
                    setattr(req, k, int(d[k]))
                except (TypeError, ValueError):
                    raise RequestError(f"{k} must be an integer")
        for k in ("fov_deg", "azimuth", "elevation", "radius"):
            if k in d:
                try:
                    setattr(req, k, float(d[k]))
                except (TypeError, ValueError):
                    raise RequestError(f"{k} must be a number")
        for k in ("use_ess", "two_stage"):
            if k in d:
                v = d[k]
                req.__dict__[k] = v in (True, 1, "1", "true", "True", "yes")
        if "rt" in d:
            rt = np.asarray(d["rt"], dtype=np.float64)
            if rt.shape != (3, 4):
                raise RequestError(f"rt must be 3x4, got {rt.shape}")
            req.rt = rt
        if "position" in d:
            req.position = _floats(d["position"], 3, "position")
            if "look_at" in d:
                req.look_at = _floats(d["look_at"], 3, "look_at")
            req.up = _floats(d.get("up", [0.0, 0.0, 1.0]), 3, "up")
        return req

    @classmethod
    def from_query(cls, query: str):
        qs = parse_qs(query, keep_blank_values=False)
        flat = {k: v[-1] for k, v in qs.items()}
        return cls.from_dict(flat)


@dataclass
class RenderService:
    model: object
    model_id: str = "unloaded"
    max_resolution: int = 1024
    occ_dir: str = ""
    conservative_ess: bool = True  # build occupancy at tau1/2 for fidelity
    _occ_cache: dict = field(default_factory=dict, repr=False)
    _lock: object = field(default_factory=threading.Lock, repr=False)

    def meta(self) -> dict:
        b = self.model.bounds
        return {
            "frames": self.model.n_frames,
            "bounds": b.to_dict(),
            "default_camera": {
                "azimuth": 0.0,
                "elevation": 15.0,
                "radius": 2.0 * b.diagonal,
                "fov_deg": 45.0,
            },
            "model_id": self.model_id,
            "max_resolution": self.max_resolution,
        }

    def occ_for(self, frame: int):
        with self._lock:
            if frame in self._occ_cache:
                return self._occ_cache[frame]
        path = os.path.join(self.occ_dir, f"frame{frame:04d}.occ") if self.occ_dir else ""
        if path and os.path.exists(path):
            vol = occupancy.load(path)
        else:
            tau = self.model.cfg.tau1 / 2.0 if self.conservative_ess else self.model.cfg.tau1
            vol = occupancy.build(self.model, frame, tau1=tau)
        with self._lock:
            self._occ_cache[frame] = vol
        return vol

    def camera_for(self, req: RenderRequest) -> Camera:
        w, h = req.width, req.height
        fx = (w / 2.0) / np.tan(np.deg2rad(req.fov_deg) / 2.0)
        fy = fx
        if req.rt is not None:
            rt = np.asarray(req.rt, dtype=np.float64)
            return Camera(fx=fx, fy=fy, cx=w / 2.0, cy=h / 2.0,
                          rot=rt[:, :3], trans=rt[:, 3], width=w, height=h)
        center = self.model.bounds.center
        if req.position is not None:
            pos = np.asarray(req.position, dtype=np.float64)
            target = np.asarray(req.look_at, dtype=np.float64) if req.look_at is not None else center
            up = np.asarray(req.up if req.up is not None else [0.0, 0.0, 1.0], dtype=np.float64)
        else:
            radius = req.radius if req.radius > 0 else 2.0 * self.model.bounds.diagonal
            az, el = np.deg2rad(req.azimuth), np.deg2rad(req.elevation)
            pos = center + radius * np.array(
                [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)]
            )
            target, up = center, np.array([0.0, 0.0, 1.0])
        try:
            return Camera.look_at(pos, target, up, fx, fy, w, h)
        except ValueError as e:
            raise RequestError(str(e))

    def validate(self, req: RenderRequest):
        if not 0 <= req.frame < self.model.n_frames:
            raise FrameNotFound(f"frame {req.frame} out of range [0, {self.model.n_frames})")
        if req.width < 1 or req.height < 1:
            raise RequestError("resolution must be positive")
        if max(req.width, req.height) > self.max_resolution:
            raise RequestError(
                f"resolution {req.width}x{req.height} exceeds maximum {self.max_resolution}"
            )

    def render_png(self, req: RenderRequest):
        """Returns (png_bytes, render_millis)."""
        self.validate(req)
        cam = self.camera_for(req)
        occ = self.occ_for(req.frame) if req.use_ess else None
        opts = RenderOptions(use_ess=req.use_ess, two_stage=req.two_stage,
                             tau2=self.model.cfg.tau2, occ=occ)
        t0 = time.perf_counter()
        img, _ = render_image(self.model, req.frame, cam, opts)
        millis = (time.perf_counter() - t0) * 1000.0
        u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
        return buf.getvalue(), millis


def make_handler(service: RenderService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # keep test output clean
            pass

        def _cors(self):
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Expose-Headers", "X-Render-Millis")

        def _reply(self, code: int, body: bytes, ctype: str, extra=None):
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self._cors()
            for k, v in (extra or {}).items():
                self.send_header(k, v)
            self.end_headers()
            self.wfile.write(body)

        def _json(self, code: int, obj):
            self._reply(code, json.dumps(obj).encode("utf-8"), "application/json")

        def _render(self, req: RenderRequest):
            try:
                png, millis = service.render_png(req)
            except FrameNotFound as e:
                return self._json(404, {"error": str(e)})
            except RequestError as e:
                return self._json(400, {"error": str(e)})
            self._reply(200, png, "image/png", {"X-Render-Millis": f"{millis:.3f}"})

        def do_OPTIONS(self):
            self.send_response(204)
            self._cors()
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
            self.send_header("Content-Length", "0")
            self.end_headers()

        def do_GET(self):
            u = urlparse(self.path)
            if u.path == "/meta":
                return self._json(200, service.meta())
            if u.path == "/render":
                try:
                    req = RenderRequest.from_query(u.query)
                except RequestError as e:
                    return self._json(400, {"error": str(e)})
                return self._render(req)
            return self._json(404, {"error": f"no such path {u.path}"})

        def do_POST(self):
            u = urlparse(self.path)
            if u.path != "/render":
                return self._json(404, {"error": f"no such path {u.path}"})
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                req = RenderRequest.from_dict(payload)
            except (json.JSONDecodeError, RequestError) as e:
                return self._json(400, {"error": str(e)})
            return self._render(req)

    return Handler


def run_server(service: RenderService, host: str, port: int):
    """Blocking serve loop; returns the server (for tests use make_server)."""
    server = make_server(service, host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()


def make_server(service: RenderService, host: str, port: int) -> ThreadingHTTPServer:
    return ThreadingHTTPServer((host, port), make_handler(service))
