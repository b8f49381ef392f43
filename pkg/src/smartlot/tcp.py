"""TCP transport for the wire protocol: frames are self-delimiting, so the
hub can split a byte stream without any extra envelope. Queued operator
commands for a lot ride back on that lot's connection.
"""

from __future__ import annotations

import socketserver
import threading

from . import protocol
from .hub import Hub


def feed_stream(hub: Hub, buffer: bytearray, on_frame=None) -> list:
    """Consume as many complete frames from `buffer` as possible.

    Returns the ingest results; leaves a partial trailing frame in place.
    On an unrecoverable framing error the buffer is cleared (a corrupt
    stream cannot be resynchronized without an envelope).
    """
    results = []
    while buffer:
        try:
            frame, consumed = protocol.decode_frame(bytes(buffer))
        except protocol.Truncated:
            break
        except protocol.ProtocolError as exc:
            hub.decode_errors += 1
            results.append(("error", type(exc).__name__))
            buffer.clear()
            break
        raw = bytes(buffer[:consumed])
        del buffer[:consumed]
        results.append(hub.ingest_frame(raw))
        if on_frame is not None:
            on_frame(frame)
    return results


class _FrameHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        hub: Hub = self.server.hub  # type: ignore[attr-defined]
        buffer = bytearray()
        lot_ids: set[int] = set()
        while True:
            try:
                chunk = self.request.recv(4096)
            except OSError:
                return
            if not chunk:
                return
            buffer.extend(chunk)
            feed_stream(hub, buffer, on_frame=lambda f: lot_ids.add(f.lot_id))
            # relay any queued operator commands back to the device
            for lot_id in lot_ids:
                try:
                    for cmd in hub.poll_commands(lot_id):
                        self.request.sendall(cmd)
                except Exception:
                    return


class HubTcpServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, hub: Hub, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _FrameHandler)
        self.hub = hub


def serve_tcp(hub: Hub, host: str = "127.0.0.1", port: int = 0) -> tuple[HubTcpServer, threading.Thread]:
    server = HubTcpServer(hub, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
