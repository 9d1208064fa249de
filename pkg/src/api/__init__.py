# FastAPI application package