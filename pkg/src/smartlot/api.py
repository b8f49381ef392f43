"""HTTP surface of the hub: availability queries, event history, operator
commands, a server-sent-events live stream, and (in embedded-sim mode)
vehicle injection.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, StreamingResponse

from . import protocol
from .hub import Hub, UnknownLot

SSE_KEEPALIVE_S = 15.0


def build_app(hub: Hub, keepalive_s: float = SSE_KEEPALIVE_S) -> FastAPI:
    app = FastAPI(title="smartlot hub")

    def get_view(lot_id: int):
        try:
            return hub.snapshot(lot_id)
        except UnknownLot:
            raise HTTPException(status_code=404, detail=f"unknown lot {lot_id}")

    @app.get("/api/lots")
    def list_lots():
        now = hub.now_ms()
        out = []
        for lot_id in hub.lot_ids():
            view = hub.snapshot(lot_id)
            out.append({
                "lot_id": view.lot_id,
                "available": view.available,
                "slot_count": view.slot_count,
                "online": view.online(now, hub.heartbeat_ms),
                "updated_at_ms": view.updated_at_ms,
            })
        return out

    @app.get("/api/lots/{lot_id}")
    def get_lot(lot_id: int):
        return get_view(lot_id).to_api_dict(hub.now_ms(), hub.heartbeat_ms)

    @app.get("/api/lots/{lot_id}/events")
    def get_events(lot_id: int, from_seq: int = 0, limit: int = 1000):
        if not 1 <= limit <= 1000:
            raise HTTPException(status_code=422, detail="limit must be in 1..1000")
        try:
            records = hub.history(lot_id, from_seq=from_seq, limit=limit)
        except UnknownLot:
            raise HTTPException(status_code=404, detail=f"unknown lot {lot_id}")
        next_from = records[-1].record_seq if records else from_seq
        return {"records": [r.to_dict() for r in records], "next_from_seq": next_from}

    @app.post("/api/lots/{lot_id}/commands", status_code=202)
    def post_command(lot_id: int, body: dict):
        try:
            command = _parse_command(body)
            command_id = hub.issue_command(lot_id, command)
        except UnknownLot:
            raise HTTPException(status_code=404, detail=f"unknown lot {lot_id}")
        except (protocol.InvalidArgument, KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"command_id": command_id}

    @app.get("/api/lots/{lot_id}/stream")
    async def stream(lot_id: int, from_seq: int = 0):
        get_view(lot_id)  # 404 before the stream starts
        sub = hub.subscribe(lot_id)

        async def generate():
            import time

            from starlette.concurrency import run_in_threadpool

            last_sent = from_seq
            poll_s = min(0.1, keepalive_s)
            try:
                for rec in hub.history(lot_id, from_seq=from_seq, limit=1000):
                    last_sent = rec.record_seq
                    yield f"data: {rec.to_json()}\n\n"
                next_keepalive = time.monotonic() + keepalive_s
                while True:
                    # short blocking hops keep the generator cancellable
                    rec = await run_in_threadpool(sub.get, poll_s)
                    if rec is None:
                        if sub.closed:
                            if sub.overflowed:
                                yield "event: overflow\ndata: subscriber too slow\n\n"
                            return
                        if time.monotonic() >= next_keepalive:
                            next_keepalive = time.monotonic() + keepalive_s
                            yield ": keepalive\n\n"
                        continue
                    if rec.record_seq <= last_sent:
                        continue
                    last_sent = rec.record_seq
                    next_keepalive = time.monotonic() + keepalive_s
                    yield f"data: {rec.to_json()}\n\n"
            finally:
                hub.unsubscribe(sub)

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.post("/api/sim/vehicles")
    def sim_vehicles(body: dict):
        if hub.sim_injector is None:
            return JSONResponse(status_code=404,
                                content={"detail": "hub is not running an embedded simulation"})
        action = body.get("action")
        if action == "arrive":
            stay_ms = body.get("stay_ms")
            if not isinstance(stay_ms, int) or stay_ms <= 0:
                raise HTTPException(status_code=422, detail="stay_ms must be a positive integer")
            hub.sim_injector(("arrive", stay_ms))
        elif action == "depart":
            slot = body.get("slot")
            if not isinstance(slot, int) or slot < 1:
                raise HTTPException(status_code=422, detail="slot must be a positive integer")
            hub.sim_injector(("depart", slot))
        else:
            raise HTTPException(status_code=422, detail="action must be 'arrive' or 'depart'")
        return JSONResponse(status_code=202, content={"queued": True})

    return app


def _parse_command(body: dict) -> protocol.CommandPayload:
    kind = body["type"]
    if kind == "barrier_override":
        mode = {"auto": 0, "forced_open": 1, "forced_closed": 2}[body["mode"]]
        return protocol.CommandPayload(protocol.CMD_BARRIER_OVERRIDE, mode, 0)
    if kind == "slot_service":
        return protocol.CommandPayload(
            protocol.CMD_SLOT_SERVICE, int(body["slot"]),
            1 if body["out_of_service"] else 0)
    raise ValueError(f"unknown command type {kind!r}")


def serve_in_thread(app: FastAPI, host: str, port: int):
    """Run uvicorn on a daemon thread; returns (server, thread)."""
    import threading

    import uvicorn

    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    return server, thread


__all__ = ["build_app", "serve_in_thread", "SSE_KEEPALIVE_S"]
