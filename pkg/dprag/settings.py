# dprag/settings.py
from __future__ import annotations

import os

from dotenv import load_dotenv

load_dotenv()

# Environment / defaults -------------------------------------------------------

# Name of the variable holding the bearer token, not the token itself.
API_KEY_ENV = os.getenv("DPRAG_API_KEY_ENV", "DPRAG_API_KEY")
REMOTE_TIMEOUT = float(os.getenv("DPRAG_REMOTE_TIMEOUT", "30"))
REMOTE_RETRIES = int(os.getenv("DPRAG_REMOTE_RETRIES", "2"))
REMOTE_MAX_IN_FLIGHT = int(os.getenv("DPRAG_REMOTE_MAX_IN_FLIGHT", "8"))
LOG_LEVEL = os.getenv("DPRAG_LOG_LEVEL", "WARNING")

# Values used by the experimental setup of the voting algorithms.
DEFAULT_DELTA_TOKEN = 1e-5
DEFAULT_DELTA_TOTAL = 1e-4
DEFAULT_T_MAX_CAP = 64
