import logging
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from app.config import configure_logging
from app.routes import design_routes, experiment_routes

# Configure logging
configure_logging()
logger = logging.getLogger(__name__)

# Create FastAPI app
app = FastAPI(
    title="CS-PAPI API",
    version="1.0.0",
    description="Compressed-sensing matrix design, SIN/RIP analysis and two-step reconstruction for circular photoacoustic projection imaging",
    docs_url="/docs",
    redoc_url="/redoc"
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# Include routers
app.include_router(design_routes.router)
app.include_router(experiment_routes.router)
