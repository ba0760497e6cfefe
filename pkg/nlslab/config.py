# nlslab/config.py
import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

# Process settings
OUTPUT_DIR = os.getenv("NLSLAB_OUTPUT_DIR", "runs")
LOG_LEVEL = os.getenv("NLSLAB_LOG_LEVEL", "INFO")
MAX_WORKERS = int(os.getenv("NLSLAB_MAX_WORKERS", "4"))
DEFAULT_CERTIFICATE: Optional[str] = os.getenv("NLSLAB_CERTIFICATE") or None
