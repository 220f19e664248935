"""
Main Application Module

This module serves the HTTP surface of the solver: preset listing, synchronous
scenario runs and access to the run registry.
"""

import os
import logging
from functools import lru_cache
from typing import Annotated, Any, Dict, List, Optional

from fastapi import Body, Depends, FastAPI, HTTPException, Request, status
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from app import __version__
from app.config import get_settings, setup_logging
from app.errors import SolverError
from app.run_registry import RunRegistry
from app.scenario_handler import (list_presets, load_preset, parse_config_text,
                                  run_scenario)

setup_logging()
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Coupled NLS Solver API",
    description="Run soliton collision scenarios of the linearly coupled NLS system",
    version=__version__,
)


@lru_cache(maxsize=1)
def _default_registry() -> RunRegistry:
    path = get_settings().registry_path
    logger.info(f"Run registry at {path}")
    return RunRegistry(path)


def get_registry() -> RunRegistry:
    return _default_registry()


class RunRequest(BaseModel):
    """Scenario run request; exactly one of ``preset`` and ``config_text`` is required."""
    preset: Optional[str] = Field(None, description="Name of a shipped preset")
    config_text: Optional[str] = Field(None, description="Scenario config in key = value form")
    phase_diff: Optional[float] = Field(None, description="Phase difference in degrees")
    overrides: Dict[str, str] = Field(default_factory=dict, description="Config keys to override")


@app.get("/presets")
def presets() -> List[Dict[str, Any]]:
    """List shipped presets with their parameters."""
    settings = get_settings()
    result = []
    for name in list_presets(settings.preset_dir):
        config = load_preset(name, settings.preset_dir)
        result.append({"name": name, "config": config.model_dump(mode="json")})
    return result


@app.post("/runs")
def create_run(
    request: Annotated[RunRequest, Body(...)],
    registry: RunRegistry = Depends(get_registry),
) -> Dict[str, Any]:
    """Run a scenario synchronously and return its summary.

    Raises:
        HTTPException: 400 when the request names neither or both config sources.
    """
    if (request.preset is None) == (request.config_text is None):
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST,
                            detail="Provide exactly one of 'preset' and 'config_text'")
    overrides = dict(request.overrides)
    if request.phase_diff is not None:
        overrides["phase_diff"] = repr(request.phase_diff)

    if request.preset is not None:
        config = load_preset(request.preset, overrides=overrides)
    else:
        config = parse_config_text(request.config_text, overrides)
    logger.info(f"Received run request for {config.name}")
    artifacts = run_scenario(config, registry=registry)
    return {"run_id": artifacts.run_id, "output_dir": artifacts.output_dir, "summary": artifacts.summary}


@app.get("/runs")
def runs(preset: Optional[str] = None, registry: RunRegistry = Depends(get_registry)) -> List[Dict[str, Any]]:
    return [
        {"run_id": r["run_id"], "name": r.get("name"), "preset": r.get("preset"),
         "recorded_at": r.get("recorded_at"), "output_dir": r.get("output_dir")}
        for r in registry.list_runs(preset)
    ]


@app.get("/runs/{run_id}")
def run_detail(run_id: str, registry: RunRegistry = Depends(get_registry)) -> Dict[str, Any]:
    record = registry.get_run(run_id)
    if record is None:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Run {run_id} not found")
    return dict(record)


@app.delete("/runs/{run_id}")
def delete_run(run_id: str, registry: RunRegistry = Depends(get_registry)) -> Dict[str, Any]:
    """Remove a run from the registry; its output directory is left in place."""
    if not registry.delete_run(run_id):
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Run {run_id} not found")
    return {"run_id": run_id, "deleted": True}


@app.get("/sweeps/{sweep_id}")
def sweep_rows(sweep_id: str, registry: RunRegistry = Depends(get_registry)) -> List[Dict[str, Any]]:
    rows = registry.get_sweep(sweep_id)
    if not rows:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=f"Sweep {sweep_id} not found")
    return [dict(r) for r in rows]


@app.post("/registry/backup")
def backup_registry(registry: RunRegistry = Depends(get_registry)) -> Dict[str, Any]:
    """Copy the registry file next to itself.

    Raises:
        HTTPException: 500 when the copy fails.
    """
    result = registry.backup()
    if not result["success"]:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=result["error"])
    return result


@app.exception_handler(SolverError)
async def solver_exception_handler(request: Request, exc: SolverError) -> JSONResponse:
    """Map solver and config errors to 422 with the error name and message."""
    logger.error(f"{type(exc).__name__}: {str(exc)}")
    return JSONResponse(
        status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
        content={"detail": str(exc), "error": type(exc).__name__},
    )


@app.exception_handler(Exception)
async def global_exception_handler(request: Request, exc: Exception) -> JSONResponse:
    """Global exception handler for the application."""
    logger.error(f"Unhandled exception: {str(exc)}")
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={"detail": f"An unexpected error occurred: {str(exc)}"},
    )


if __name__ == "__main__":
    import uvicorn
    port = int(os.getenv("PORT", 8000))
    host = os.getenv("HOST", "0.0.0.0")
    debug = os.getenv("DEBUG", "False").lower() == "true"
    uvicorn.run("app.main:app", host=host, port=port, reload=debug)
