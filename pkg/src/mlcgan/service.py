"""HTTP inference service.

Serves a frozen EMA generator snapshot: /health and /vocabulary describe the
model, /generate returns a PNG (or JSON with the PNG base64-encoded) for an
(ingredients, seed, truncation) triple, /interpolate returns a grid that
sweeps label embeddings along one axis and style noise along the other.
Responses are pure functions of the request body: the seed derives z through
a counter-based rng so identical requests give identical bytes on any
platform, and nothing can mutate the loaded weights.
"""

import base64
import hashlib
import io
import json
import threading

import numpy as np
import torch
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .checkpoint import load_checkpoint
from .data import IngredientVocabulary, encode_labels
from .evaluate import image_to_png_bytes, interpolate_condition, render_cell
from .generator import ConditionalGenerator
from .trainer import TrainingConfig

MAX_SEED = 2 ** 64 - 1


class GenerateRequest(BaseModel):
    ingredients: list[str] = Field(default_factory=list)
    seed: int = 0
    truncation: float = 1.0
    resolution: int | None = None


class Endpoint(BaseModel):
    ingredients: list[str] = Field(default_factory=list)
    seed: int = 0


class InterpolateRequest(BaseModel):
    a: Endpoint
    b: Endpoint
    steps: int = 8
    truncation: float = 1.0


def _bad_request(code: str, message: str, **extra):
    return HTTPException(status_code=400,
                         detail={"code": code, "message": message, **extra})


def load_generator(checkpoint_path) -> tuple[ConditionalGenerator, IngredientVocabulary]:
    """Rebuild the EMA generator and vocabulary from a training checkpoint."""
    ck = load_checkpoint(checkpoint_path)
    cfg = TrainingConfig(**ck.config).generator_config()
    generator = ConditionalGenerator(cfg)
    generator.load_state_dict(ck.state["ema"])
    generator.eval()
    for p in generator.parameters():
        p.requires_grad_(False)
    return generator, IngredientVocabulary(tuple(ck.vocabulary))


def z_from_seed(seed: int, latent_dim: int) -> np.ndarray:
    """Counter-based derivation: the same seed gives the same z everywhere."""
    rng = np.random.Generator(np.random.Philox(seed))
    return rng.standard_normal(latent_dim)


def create_app(generator: ConditionalGenerator, vocabulary: IngredientVocabulary,
               workers: int = 2, frontend_dir=None) -> FastAPI:
    app = FastAPI(title="ingredient-conditioned image service")
    gate = threading.Semaphore(workers)   # bound concurrent generation jobs
    resolution = generator.cfg.resolution

    def validate_ingredients(names: list[str]) -> torch.Tensor:
        for name in names:
            if name not in vocabulary:
                raise _bad_request("unknown_ingredient",
                                   f"unknown ingredient name: {name!r}",
                                   ingredient=name)
        bits = encode_labels(names, vocabulary)
        return torch.from_numpy(bits).unsqueeze(0)

    def validate_seed(seed: int) -> int:
        if not 0 <= seed <= MAX_SEED:
            raise _bad_request("invalid_seed", "seed must fit in 64 bits unsigned")
        return seed

    def validate_truncation(psi: float) -> float:
        if not 0.0 <= psi <= 1.0:
            raise _bad_request("invalid_truncation",
                               "truncation must lie in [0, 1]")
        return psi

    def run_generate(req: GenerateRequest):
        x = validate_ingredients(req.ingredients)
        seed = validate_seed(req.seed)
        psi = validate_truncation(req.truncation)
        if req.resolution is not None and not 16 <= req.resolution <= 4096:
            raise _bad_request("invalid_resolution",
                               "resolution must lie in [16, 4096]")
        z = torch.from_numpy(z_from_seed(seed, generator.cfg.latent_dim))
        z = z.float().unsqueeze(0)
        with gate, torch.no_grad():
            img = generator(x, z, psi=psi).squeeze(0)
        png = image_to_png_bytes(img)
        if req.resolution is not None and req.resolution != resolution:
            pil = Image.open(io.BytesIO(png)).resize(
                (req.resolution, req.resolution), Image.LANCZOS)
            buf = io.BytesIO()
            pil.save(buf, format="PNG")
            png = buf.getvalue()
        meta = {
            "ingredients": list(req.ingredients),
            "labels": [int(b) for b in x.squeeze(0).tolist()],
            "seed": seed,
            "truncation": psi,
            "resolution": req.resolution or resolution,
            "sha256": hashlib.sha256(png).hexdigest(),
        }
        return png, meta

    @app.get("/health")
    def health():
        return {"status": "ok", "resolution": resolution,
                "C": len(vocabulary)}

    @app.get("/vocabulary")
    def get_vocabulary():
        return list(vocabulary.names)

    @app.post("/generate")
    def generate(req: GenerateRequest):
        png, meta = run_generate(req)
        return Response(content=png, media_type="image/png",
                        headers={"X-Metadata": json.dumps(meta, sort_keys=True)})

    @app.post("/generate.json")
    def generate_json(req: GenerateRequest):
        png, meta = run_generate(req)
        return JSONResponse({**meta, "png_base64": base64.b64encode(png).decode()})

    @app.post("/interpolate")
    def interpolate(req: InterpolateRequest):
        if not 2 <= req.steps <= 16:
            raise _bad_request("invalid_steps", "steps must lie in [2, 16]")
        psi = validate_truncation(req.truncation)
        x_a = validate_ingredients(req.a.ingredients)
        x_b = validate_ingredients(req.b.ingredients)
        z_a = z_from_seed(validate_seed(req.a.seed), generator.cfg.latent_dim)
        z_b = z_from_seed(validate_seed(req.b.seed), generator.cfg.latent_dim)
        with torch.no_grad():
            te_a = {s: t.squeeze(0).numpy() for s, t in generator.sle(x_a).items()}
            te_b = {s: t.squeeze(0).numpy() for s, t in generator.sle(x_b).items()}
        spec = interpolate_condition(te_a, te_b, z_a, z_b, req.steps, psi=psi)
        cells = []
        with gate:
            for i, row in enumerate(spec.cells):
                for j, cell in enumerate(row):
                    png = image_to_png_bytes(render_cell(cell, generator))
                    cells.append({
                        "row": i, "col": j,
                        "alpha": cell.meta["alpha"], "beta": cell.meta["beta"],
                        "sha256": hashlib.sha256(png).hexdigest(),
                        "png_base64": base64.b64encode(png).decode(),
                    })
        return JSONResponse({
            "steps": req.steps, "truncation": psi,
            "a": req.a.model_dump(), "b": req.b.model_dump(),
            "axes": {"rows": "label embedding", "cols": "style noise"},
            "cells": cells,
        })

    if frontend_dir is not None:
        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="ui")
    return app


def serve(checkpoint_path, host: str = "127.0.0.1", port: int = 8000,
          workers: int = 2, frontend_dir=None) -> None:
    import uvicorn
    generator, vocabulary = load_generator(checkpoint_path)
    app = create_app(generator, vocabulary, workers=workers,
                     frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port)
