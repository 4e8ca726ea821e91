import os

# Must be set before app.config is imported by any test module
os.environ.setdefault("SPRE_RATE_LIMIT", "10000/minute")
