"""Length-prefixed JSON wire protocol shared by the orchestrator/worker
dispatch loop and the external-renderer seam.

Byte layout: every message is a 4-byte big-endian unsigned payload length
followed by that many bytes of UTF-8 JSON. The JSON object always carries a
"type" field, one of REGISTER, RENDER_REQUEST, RENDER_RESPONSE, ERROR,
HEARTBEAT, DONE. Binary buffers ride inside the JSON envelope as base64
with a CRC32 checksum of the raw bytes; floats are little-endian float32.
"""

from __future__ import annotations

import base64
import json
import socket
import struct
import zlib

import numpy as np

from .errors import CapabilityError, ProtocolError
from .render import RenderOutput

MAX_MESSAGE_BYTES = 1 << 29  # 512 MiB

REGISTER = "REGISTER"
RENDER_REQUEST = "RENDER_REQUEST"
RENDER_RESPONSE = "RENDER_RESPONSE"
ERROR = "ERROR"
HEARTBEAT = "HEARTBEAT"
DONE = "DONE"

MESSAGE_TYPES = {REGISTER, RENDER_REQUEST, RENDER_RESPONSE, ERROR, HEARTBEAT, DONE}

ALL_MODALITIES = ("rgb", "uv", "depth", "segmentation")


def encode_message(message: dict) -> bytes:
    if message.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"unknown message type {message.get('type')!r}")
    payload = json.dumps(message, separators=(",", ":")).encode("utf-8")
    if len(payload) > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"message too large: {len(payload)} bytes")
    return struct.pack(">I", len(payload)) + payload


def send_message(sock: socket.socket, message: dict) -> None:
    sock.sendall(encode_message(message))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ProtocolError("connection closed mid-message")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_message(sock: socket.socket) -> dict:
    """Read one framed message; raises ProtocolError on EOF or bad frame."""
    header = _recv_exact(sock, 4)
    (length,) = struct.unpack(">I", header)
    if length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"declared payload of {length} bytes exceeds limit")
    payload = _recv_exact(sock, length)
    try:
        message = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"malformed JSON payload: {exc}") from exc
    if not isinstance(message, dict) or message.get("type") not in MESSAGE_TYPES:
        raise ProtocolError(f"bad message envelope: {str(message)[:80]}")
    return message


# ---------------------------------------------------------------------------
# buffer codec


def encode_buffer(array: np.ndarray, encoding: str) -> dict:
    if encoding == "raw_f32":
        raw = np.ascontiguousarray(array, dtype="<f4").tobytes()
    elif encoding == "raw_u8":
        raw = np.ascontiguousarray(array, dtype=np.uint8).tobytes()
    elif encoding == "png":
        from .assets import encode_png

        raw = encode_png(array)
    else:
        raise ProtocolError(f"unknown buffer encoding {encoding!r}")
    return {
        "encoding": encoding,
        "shape": list(array.shape),
        "data": base64.b64encode(raw).decode("ascii"),
        "crc32": zlib.crc32(raw) & 0xFFFFFFFF,
    }


def decode_buffer(entry: dict) -> np.ndarray:
    try:
        raw = base64.b64decode(entry["data"], validate=True)
        declared_crc = int(entry["crc32"])
        encoding = entry["encoding"]
        shape = tuple(entry["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"malformed buffer entry: {exc}") from exc
    actual_crc = zlib.crc32(raw) & 0xFFFFFFFF
    if actual_crc != declared_crc:
        raise ProtocolError(
            f"checksum mismatch: declared {declared_crc:#010x}, got {actual_crc:#010x}"
        )
    if encoding == "raw_f32":
        expected = int(np.prod(shape)) * 4
        if len(raw) != expected:
            raise ProtocolError(f"buffer length {len(raw)} != expected {expected}")
        return np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    if encoding == "raw_u8":
        expected = int(np.prod(shape))
        if len(raw) != expected:
            raise ProtocolError(f"buffer length {len(raw)} != expected {expected}")
        return np.frombuffer(raw, dtype=np.uint8).reshape(shape).copy()
    if encoding == "png":
        import io

        from PIL import Image

        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    raise ProtocolError(f"unknown buffer encoding {encoding!r}")


def encode_render_output(output: RenderOutput, modalities=ALL_MODALITIES,
                         rgb_encoding: str = "raw_f32") -> dict:
    buffers = {}
    if "rgb" in modalities:
        buffers["rgb"] = encode_buffer(output.rgb, rgb_encoding)
    if "uv" in modalities:
        buffers["uv"] = encode_buffer(output.uv, "raw_f32")
    if "depth" in modalities:
        buffers["depth"] = encode_buffer(output.depth, "raw_f32")
    if "segmentation" in modalities:
        buffers["segmentation"] = encode_buffer(
            output.segmentation.astype(np.uint8), "raw_u8"
        )
    return {"buffers": buffers, "render_time": output.render_time}


def decode_render_output(payload: dict) -> RenderOutput:
    """Rebuild and re-validate a RenderOutput from a RENDER_RESPONSE payload;
    responses missing any core buffer, or violating the buffer-consistency
    invariant, are rejected here (the sender is not trusted)."""
    buffers = payload.get("buffers", {})
    missing = [m for m in ALL_MODALITIES if m not in buffers]
    if missing:
        raise ProtocolError(f"render response missing buffers: {missing}")
    rgb = decode_buffer(buffers["rgb"]).astype(np.float32)
    uv = decode_buffer(buffers["uv"])
    depth = decode_buffer(buffers["depth"])
    seg = decode_buffer(buffers["segmentation"]).astype(bool)
    output = RenderOutput(
        rgb=rgb, uv=uv, depth=depth, segmentation=seg,
        render_time=float(payload.get("render_time", 0.0)),
    )
    output.validate()
    return output


# ---------------------------------------------------------------------------
# external renderer seam


def builtin_capabilities(control_names) -> dict:
    return {
        "controls": sorted(control_names),
        "modalities": list(ALL_MODALITIES),
    }


def check_capabilities(offered: dict, required_controls, required_modalities):
    """Capability mismatches surface at registration, never mid-run."""
    have_controls = set(offered.get("controls", ()))
    have_modalities = set(offered.get("modalities", ()))
    if offered.get("wildcard"):
        return
    missing_c = set(required_controls) - have_controls
    missing_m = set(required_modalities) - have_modalities
    if missing_c or missing_m:
        raise CapabilityError(
            "capability mismatch: missing controls "
            f"{sorted(missing_c)}, missing modalities {sorted(missing_m)}"
        )


def serve_render_requests(listener: socket.socket, assets, registry,
                          max_requests: int | None = None) -> None:
    """Serve the built-in renderer behind the wire protocol (one client).

    Handshake: on connect the server announces its capabilities in a
    REGISTER message; each RENDER_REQUEST carries a scene JSON and the
    modalities to return; responses are byte-identical to an in-process
    render. Used both as the reference implementation of the external-
    renderer seam and as a test double for third-party backends.
    """
    from .render import render
    from .scene import SceneState

    conn, _ = listener.accept()
    served = 0
    try:
        send_message(conn, {
            "type": REGISTER,
            "capabilities": builtin_capabilities([c.descriptor.name for c in registry]),
        })
        while max_requests is None or served < max_requests:
            try:
                message = recv_message(conn)
            except ProtocolError:
                break
            if message["type"] == DONE:
                break
            if message["type"] != RENDER_REQUEST:
                send_message(conn, {"type": ERROR,
                                    "error": f"unexpected {message['type']}"})
                continue
            try:
                state = SceneState.from_json(message["scene"])
                output = render(state, assets)
                payload = encode_render_output(
                    output, modalities=message.get("modalities", ALL_MODALITIES),
                    rgb_encoding=message.get("rgb_encoding", "raw_f32"),
                )
                send_message(conn, {
                    "type": RENDER_RESPONSE,
                    "request_id": message.get("request_id"),
                    **payload,
                })
            except Exception as exc:  # reported to the client, not fatal
                send_message(conn, {
                    "type": ERROR,
                    "request_id": message.get("request_id"),
                    "error": str(exc),
                })
            served += 1
    finally:
        conn.close()


class RemoteRenderBackend:
    """Client side of the external-renderer protocol. Capability mismatches
    (e.g. no uv buffer when the experiment needs heatmaps) fail here, at
    registration time."""

    def __init__(self, address: tuple[str, int], required_controls=(),
                 required_modalities=ALL_MODALITIES, timeout: float = 30.0):
        self.required_modalities = tuple(required_modalities)
        self._sock = socket.create_connection(address, timeout=timeout)
        hello = recv_message(self._sock)
        if hello.get("type") != REGISTER:
            raise ProtocolError(f"expected REGISTER, got {hello.get('type')}")
        check_capabilities(hello.get("capabilities", {}), required_controls,
                           self.required_modalities)
        self._next_id = 0

    def render(self, state) -> RenderOutput:
        request_id = self._next_id
        self._next_id += 1
        send_message(self._sock, {
            "type": RENDER_REQUEST,
            "request_id": request_id,
            "scene": state.to_json(),
            # a full RenderOutput is revalidated on receipt, so always ask
            # for every buffer; required_modalities only gates registration
            "modalities": list(ALL_MODALITIES),
        })
        response = recv_message(self._sock)
        if response["type"] == ERROR:
            raise ProtocolError(f"remote renderer error: {response.get('error')}")
        if response["type"] != RENDER_RESPONSE:
            raise ProtocolError(f"expected RENDER_RESPONSE, got {response['type']}")
        return decode_render_output(response)

    def close(self) -> None:
        try:
            send_message(self._sock, {"type": DONE})
        except OSError:
            pass
        self._sock.close()
