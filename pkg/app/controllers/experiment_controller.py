import logging
from pathlib import Path
from typing import Any, Dict

from fastapi import HTTPException
from fastapi.concurrency import run_in_threadpool
from pydantic import ValidationError

from app import config as app_config
from app.controllers.design_controller import http_error
from app.models.config import ExperimentConfig
from app.services.experiment import run_pipeline

logger = logging.getLogger(__name__)


def _confined_output_dir(output_dir: str) -> str:
    """Resolve a requested output directory; it must stay inside the configured results root"""
    root = Path(app_config.OUTPUT_DIR).resolve()
    target = Path(output_dir).resolve()
    if not target.is_relative_to(root):
        raise HTTPException(status_code=400, detail=f"output_dir must lie inside {app_config.OUTPUT_DIR}")
    return str(target)


async def pipeline_controller(request: Dict[str, Any]) -> Dict[str, Any]:
    """
    Controller logic for a full design / simulate / reconstruct run

    Args:
        request: ExperimentConfig as a dictionary

    Returns:
        Response dictionary with the error report and the output directory
    """
    try:
        try:
            config = ExperimentConfig.model_validate(request)
        except ValidationError as e:
            raise HTTPException(status_code=400, detail=f"Invalid experiment config: {e.errors()}")
        config = config.model_copy(update={"output_dir": _confined_output_dir(config.output_dir)})

        logger.info(
            f"Pipeline request received: phantom={config.phantom.name}, noise={config.noise_level}, "
            f"output_dir={config.output_dir}"
        )
        report = await run_in_threadpool(run_pipeline, config)

        logger.info(f"Pipeline completed: {report.label}")
        return {"success": True, "output_dir": config.output_dir, "report": report.model_dump()}

    except HTTPException:
        raise
    except Exception as e:
        logger.error(f"Error in pipeline request: {str(e)}")
        raise http_error(e)
