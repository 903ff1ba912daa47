"""HTTP+JSON surface over the document service."""

from __future__ import annotations

from fastapi import Body, FastAPI, Response

from .service import (
    DocumentService,
    PayloadError,
    UnknownJobError,
    UnknownPageError,
)


def create_app(service: DocumentService) -> FastAPI:
    app = FastAPI(title="docstruct", version="0.1.0")

    from fastapi.middleware.cors import CORSMiddleware

    # the review console is served from its own origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )

    @app.exception_handler(UnknownPageError)
    async def _unknown_page(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=404, content={"error": f"unknown page {exc.args[0]}"})

    @app.exception_handler(UnknownJobError)
    async def _unknown_job(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=404, content={"error": f"unknown job {exc.args[0]}"})

    @app.exception_handler(PayloadError)
    async def _bad_payload(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=400, content={"error": str(exc), "fields": exc.fields}
        )

    @app.exception_handler(FileNotFoundError)
    async def _missing(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=404, content={"error": str(exc)})

    @app.post("/documents", status_code=201)
    def ingest(payload: dict = Body(...)):
        return {"page_id": service.ingest_document(payload)}

    @app.get("/documents/{page_id}/layout")
    def layout(page_id: str):
        # pre-serialized canonical bytes: re-encoding could change them
        return Response(content=service.get_layout(page_id), media_type="application/json")

    @app.post("/documents/{page_id}/corrections")
    def corrections(page_id: str, record: dict = Body(...)):
        return service.submit_correction(page_id, record)

    @app.post("/train/incremental")
    def train(overrides: dict | None = Body(None)):
        return service.trigger_incremental_training(overrides)

    @app.get("/train/jobs/{job_id}")
    def job(job_id: str):
        return service.get_job(job_id)

    @app.get("/models/current")
    def current_model():
        return service.current_model()

    return app
