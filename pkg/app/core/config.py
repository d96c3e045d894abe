import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings

load_dotenv()

class Settings(BaseSettings):
    API_PORT: int = int(os.getenv("API_PORT", 8070))
    DEBUG: bool = os.getenv("DEBUG", "False").lower() == "true"
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    # Relative output directories are resolved under this root when set
    OUTPUT_ROOT: str = os.getenv("OUTPUT_ROOT", "")

    def resolve_output(self, path: str, root: Optional[str] = None) -> Path:
        root = self.OUTPUT_ROOT if root is None else root
        p = Path(path)
        if p.is_absolute() or not root:
            return p
        return Path(root) / p

settings = Settings()
