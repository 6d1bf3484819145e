from typing import Any, Dict

from fastapi import APIRouter

from app.controllers.design_controller import design_controller, rip_controller, sin_controller

router = APIRouter(prefix="/api/v1", tags=["design"])


@router.post("/design")
async def design(request: Dict[str, Any]):
    """
    Search a CS group matrix with a large sparse injectivity number

    Request body:
    - **b**: Sensors per block (default 4)
    - **g**: Blocks per group (default 4)
    - **m0**: Measurements per group (default 12)
    - **k**: Column-subset size of the SIN (default 4)
    - **n_iter**: Random draws (default 100)
    - **seed**: Seed of the search (default 0)

    Returns:
    - **sin**: Best SIN found
    - **selection_list**: m0 x g sensor selections
    - **matrix**: Binary m0 x (b*g) matrix
    - **profile**: SIN of the best matrix for k = 1..5
    """
    return await design_controller(request)


@router.post("/sin")
async def sparse_injectivity_number(request: Dict[str, Any]):
    """
    Exhaustive sparse injectivity number of a matrix

    Request body:
    - **matrix**: List of rows (required)
    - **k**: Column-subset size (required)

    Returns:
    - **theta**: Smallest singular value over all k-column submatrices
    - **worst_subset**: Columns attaining it
    - **worst_vector**: Unit vector x with ||Mx|| = theta
    """
    return await sin_controller(request)


@router.post("/rip")
async def restricted_isometry_constant(request: Dict[str, Any]):
    """
    Exhaustive restricted isometry constant of a matrix

    Request body:
    - **matrix**: List of rows (required)
    - **s**: Sparsity order (required)
    """
    return await rip_controller(request)
