import os
import logging
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Configuration
OUTPUT_DIR = os.getenv("PAPI_OUTPUT_DIR", "results")
LOG_LEVEL = os.getenv("PAPI_LOG_LEVEL", "INFO").upper()
API_HOST = os.getenv("PAPI_API_HOST", "0.0.0.0")
API_PORT = int(os.getenv("PAPI_API_PORT", "8000"))
MAX_SUBSETS = int(os.getenv("PAPI_MAX_SUBSETS", "100000"))


def configure_logging() -> None:
    """Configure root logging once for an entry point"""
    logging.basicConfig(
        level=getattr(logging, LOG_LEVEL, logging.INFO),
        format=LOG_FORMAT
    )
