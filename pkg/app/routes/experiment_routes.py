from typing import Any, Dict

from fastapi import APIRouter

from app.controllers.experiment_controller import pipeline_controller

router = APIRouter(prefix="/api/v1", tags=["experiment"])


@router.post("/pipeline")
async def pipeline(request: Dict[str, Any]):
    """
    Run design, simulation, reconstruction and evaluation

    Request body: an experiment config (geometry, structure, phantom, noise_level, tv, seed, output_dir)

    Returns:
    - **report**: Relative data / CS-step / image errors per matrix variant
    - **output_dir**: Where all artifacts were written
    """
    return await pipeline_controller(request)
