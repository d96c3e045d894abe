from fastapi import APIRouter
from app.api.v1.endpoints import router as runs_router

api_router = APIRouter()

api_router.include_router(runs_router, prefix="/v1", tags=["runs"])
