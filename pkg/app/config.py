"""
Configuration for the perception stream query engine.
All constants and settings in one place.
"""

import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Ingest Configuration
KEYFRAME_EPSILON: float = float(os.getenv("SPRE_KEYFRAME_EPSILON", "0.001"))  # seconds
CLASSIFICATION_KEY: str = os.getenv("SPRE_CLASSIFICATION_KEY", "class")
CLIP_TO_ENVIRONMENT: bool = True
DROP_MISALIGNED: bool = False

# Compiler Configuration
STATE_CAP: int = int(os.getenv("SPRE_STATE_CAP", "100000"))  # max automaton states

# Monitor Configuration
CANDIDATE_CAP: int = int(os.getenv("SPRE_CANDIDATE_CAP", "10000"))  # per term node

# Benchmark Configuration
BENCH_SAMPLES: int = 10
BENCH_WARMUP: int = 1  # untimed runs before sampling

# Synthetic Stream Configuration
GENERATOR_SEED: int = 0
GENERATOR_FRAMES: int = 1000
GENERATOR_OBJECTS_PER_FRAME: int = 5
GENERATOR_CLASSES: tuple = ("pedestrian", "bicycle", "car", "truck", "bus", "sign")
GENERATOR_OVERLAP_PROBABILITY: float = 0.1
GENERATOR_WIDTH: float = 1920.0
GENERATOR_HEIGHT: float = 1080.0

# Logging Configuration
LOG_LEVEL: str = os.getenv("SPRE_LOG_LEVEL", "WARNING")
LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Query Service Configuration
RATE_LIMIT: str = os.getenv("SPRE_RATE_LIMIT", "60/minute")
MAX_QUERY_LENGTH: int = 2000
MAX_FRAMES_PER_REQUEST: int = 10000
