"""HTTP JSON service exposing a fitted model to the companion UI.

One model is loaded at startup and never swapped; every handler reads the
same immutable FittedModel, so concurrent requests need no locking. The
API is three routes: GET /api/meta describes the covariate form, POST
/api/predict evaluates profiles (and optionally per-covariate effect
trajectories) on a horizon grid, GET /healthz reports liveness. Anything
else is served from an optional static directory holding the UI bundle.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import os
import posixpath
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .data import SchemaError
from .estimator import MODEL_FORMAT_VERSION, FittedModel
from .evaluation import effect_trajectory, predict_rmtl

logger = logging.getLogger(__name__)

MAX_PROFILES = 8
MAX_BODY_BYTES = 1 << 20


def meta_payload(model: FittedModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "link": model.link.kind,
        "grid": {
            "l_min": float(model.grid.points[0]),
            "l_max": float(model.grid.points[-1]),
            "points": model.grid.points.tolist(),
            "tau": model.grid.tau,
        },
        "schema": model.schema.to_json_dict(),
        "design_names": list(model.schema.design_names),
        "n_subjects": model.n_subjects,
    }


def _validate_grid(model: FittedModel, grid) -> tuple[list[float], list[dict]]:
    errors = []
    if not isinstance(grid, list) or not grid:
        return [], [{"field": "grid", "message": "grid must be a non-empty list of horizons"}]
    lo = float(model.grid.points[0])
    hi = float(model.grid.points[-1])
    out = []
    for idx, raw in enumerate(grid):
        if not isinstance(raw, (int, float)) or isinstance(raw, bool):
            errors.append({"field": f"grid[{idx}]", "message": "horizon must be a number"})
            continue
        l = float(raw)
        if not np.isfinite(l) or l < lo - 1e-12 or l > hi + 1e-12:
            errors.append(
                {
                    "field": f"grid[{idx}]",
                    "message": f"horizon {l:g} is outside the model range [{lo:g}, {hi:g}]",
                }
            )
        else:
            out.append(l)
    return out, errors


def _validate_profile(model: FittedModel, profile, idx: int) -> list[dict]:
    errors = []
    if not isinstance(profile, dict):
        return [{"field": f"profiles[{idx}]", "message": "profile must be an object"}]
    known = {e.name for e in model.schema.entries}
    for key in profile:
        if key not in known and key != "label":
            errors.append(
                {"field": f"profiles[{idx}].{key}", "message": "unknown covariate"}
            )
    for entry in model.schema.entries:
        field = f"profiles[{idx}].{entry.name}"
        if entry.name not in profile:
            errors.append({"field": field, "message": "missing covariate"})
            continue
        try:
            entry.encode(profile[entry.name])
        except SchemaError as exc:
            message = str(exc)
            prefix = f"{entry.name}: "
            if message.startswith(prefix):
                message = message[len(prefix):]
            errors.append({"field": field, "message": message})
    return errors


def predict_payload(model: FittedModel, body: dict) -> tuple[int, dict]:
    """Validate and evaluate a prediction request.

    Returns (http_status, response_document).
    """
    if not isinstance(body, dict):
        return 400, {"errors": [{"field": "", "message": "request body must be a JSON object"}]}
    profiles = body.get("profiles")
    if not isinstance(profiles, list) or not profiles:
        return 400, {
            "errors": [{"field": "profiles", "message": "profiles must be a non-empty list"}]
        }
    if len(profiles) > MAX_PROFILES:
        return 413, {
            "errors": [
                {
                    "field": "profiles",
                    "message": f"at most {MAX_PROFILES} profiles per request, got {len(profiles)}",
                }
            ]
        }
    grid, errors = _validate_grid(model, body.get("grid"))
    for idx, profile in enumerate(profiles):
        errors.extend(_validate_profile(model, profile, idx))
    if errors:
        return 400, {"errors": errors}

    predictions = []
    for profile in profiles:
        values = {k: v for k, v in profile.items() if k != "label"}
        pred = predict_rmtl(model, values, grid)
        doc = pred.to_json_dict()
        if "label" in profile:
            doc["label"] = profile["label"]
        predictions.append(doc)

    response: dict = {"predictions": predictions}
    effects_req = body.get("effects")
    if effects_req:
        names = (
            list(model.schema.design_names)
            if effects_req is True
            else [str(n) for n in effects_req]
        )
        unknown = [n for n in names if n not in model.schema.design_names]
        if unknown:
            return 400, {
                "errors": [
                    {"field": "effects", "message": f"unknown design column {unknown[0]!r}"}
                ]
            }
        response["effects"] = [
            effect_trajectory(model, name, grid).to_json_dict() for name in names
        ]
    return 200, response


def _resolve_static(root: str, path: str) -> str | None:
    clean = posixpath.normpath(path.split("?", 1)[0].split("#", 1)[0])
    if clean in ("/", "."):
        clean = "index.html"
    clean = clean.lstrip("/")
    candidate = os.path.realpath(os.path.join(root, clean))
    root_real = os.path.realpath(root)
    if candidate != root_real and not candidate.startswith(root_real + os.sep):
        return None
    if os.path.isdir(candidate):
        candidate = os.path.join(candidate, "index.html")
    return candidate if os.path.isfile(candidate) else None


class _Handler(BaseHTTPRequestHandler):
    model: FittedModel
    static_dir: str | None = None
    server_version = "dynrmtl"

    def log_message(self, format, *args):
        logger.info("%s %s", self.address_string(), format % args)

    def _send_json(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        path = self.path.split("?", 1)[0]
        if path == "/healthz":
            self._send_json(200, {"status": "ok"})
            return
        if path == "/api/meta":
            self._send_json(200, meta_payload(self.model))
            return
        if self.static_dir:
            target = _resolve_static(self.static_dir, self.path)
            if target:
                ctype = mimetypes.guess_type(target)[0] or "application/octet-stream"
                with open(target, "rb") as fh:
                    data = fh.read()
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)
                return
        self._send_json(404, {"errors": [{"field": "", "message": "not found"}]})

    def do_POST(self):
        path = self.path.split("?", 1)[0]
        if path != "/api/predict":
            self._send_json(404, {"errors": [{"field": "", "message": "not found"}]})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            length = -1
        if length < 0 or length > MAX_BODY_BYTES:
            self._send_json(
                413, {"errors": [{"field": "", "message": "request body too large or missing length"}]}
            )
            return
        raw = self.rfile.read(length)
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send_json(400, {"errors": [{"field": "", "message": "invalid JSON body"}]})
            return
        status, doc = predict_payload(self.model, body)
        self._send_json(status, doc)


def make_server(
    model: FittedModel, host: str = "127.0.0.1", port: int = 8000, static_dir: str | None = None
) -> ThreadingHTTPServer:
    """Build the HTTP server; callers run serve_forever themselves."""
    if static_dir is not None and not os.path.isdir(static_dir):
        raise ValueError(f"static directory {static_dir!r} does not exist")
    handler = type(
        "BoundHandler", (_Handler,), {"model": model, "static_dir": static_dir}
    )
    return ThreadingHTTPServer((host, port), handler)
