import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI

from app import __version__
from app.api.v1.router import api_router
from app.core.config import settings

logging.basicConfig(
    level=settings.LOG_LEVEL,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("ddpgpp")


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger.info(f"Run API starting, output root: {settings.OUTPUT_ROOT or 'runs'}")
    yield
    logger.info("Run API stopped")


app = FastAPI(
    title="DDPG++ Run API",
    description="Launch and monitor DDPG / TD3 / DDPG++ training runs",
    version=__version__,
    lifespan=lifespan
)

app.include_router(api_router, prefix="/api")


@app.get("/")
async def root():
    return {
        "name": "DDPG++ Run API",
        "version": __version__,
        "status": "online"
    }
