"""Live control loop: sample a goal, plan, and drive the motion model
through sub-goals until the target action executes; plus the streaming
session service speaking newline-delimited JSON (raw TCP or WebSocket).
"""

from __future__ import annotations

import base64
import copy
import hashlib
import json
import select
import socket
import socketserver
import threading
import time

import numpy as np

from .errors import NoGoal, NonFiniteOutput, UnknownObject
from .goals import Goal
from .kinematics import RootTransform, Skeleton, apply_root_delta, from_root_relative, to_root_relative
from .motion_model import MotionNetParams, predict_next
from .goal_model import GoalNetParams, sample_goals
from .planner import (NavGrid, NavPath, build_nav_grid, next_subgoal,
                      object_footprints, plan_path)
from .state import (CharacterState, StateConfig, action_index, build_state,
                    window_indices)
from .voxel import Scene, SceneObject, VoxelGrid, encode_relative, flatten_grid, voxelize_object

RUNTIME_ACTIONS = ("sit", "liedown")
TRANSITION_DIST = 1.5
TRANSITION_SECONDS = 1.0
STAND_OFFSET = 0.75
SESSION_CAP_SECONDS = 180.0


class FrameEvent:
    """One emitted simulation frame (wire payload)."""

    def __init__(self, frame: int, joints: np.ndarray, root: RootTransform,
                 contacts: np.ndarray, action_row: np.ndarray, subgoal: Goal,
                 status: str):
        self.frame = frame
        self.joints = joints
        self.root = root
        self.contacts = contacts
        self.action_row = action_row
        self.subgoal = subgoal
        self.status = status

    def to_dict(self) -> dict:
        return {
            "frame": self.frame,
            "joints": [[float(v) for v in row] for row in self.joints],
            "root": {"position": [float(v) for v in self.root.position],
                     "forward": [float(v) for v in self.root.forward]},
            "contacts": [float(v) for v in self.contacts],
            "actions": [float(v) for v in self.action_row],
            "subgoal": self.subgoal.to_dict(),
            "status": self.status,
        }


class Session:
    """Single-owner stepping state; model parameters are shared read-only."""

    def __init__(self, scene: Scene, obj: SceneObject, action: str, seed: int,
                 cfg: StateConfig, skeleton: Skeleton, motion: MotionNetParams,
                 goal_params: GoalNetParams | None, grid: VoxelGrid, nav: NavGrid,
                 path: NavPath, goal: Goal, state: CharacterState,
                 root: RootTransform, rng: np.random.Generator):
        self.scene = scene
        self.obj = obj
        self.action = action
        self.seed = seed
        self.cfg = cfg
        self.skeleton = skeleton
        self.motion = motion
        self.goal_params = goal_params
        self.grid = grid
        self.nav = nav
        self.path = path
        self.cursor = 0
        self.goal = goal
        self.state = state
        self.root = root
        self.rng = rng
        self.frame = 0
        self.status = "navigating"
        self.ramp_start: int | None = None
        self.streak = 0
        self.latent_scale = 1.0

    def clone(self) -> "Session":
        new = copy.copy(self)
        new.state = self.state.copy()
        new.root = RootTransform(self.root.position.copy(), self.root.forward.copy())
        new.rng = np.random.default_rng(0)
        new.rng.bit_generator.state = self.rng.bit_generator.state
        return new


def _sample_world_goal(obj: SceneObject, action: str, grid: VoxelGrid,
                       rng: np.random.Generator,
                       goal_params: GoalNetParams | None) -> Goal:
    if goal_params is not None:
        local = sample_goals(grid, 1, rng, goal_params, action)[0]
        pos = obj.to_world(local.position[None, :])[0]
        return Goal(pos, obj.dir_to_world(local.direction), action)
    labeled = [g for g in obj.world_goals() if g.action == action]
    if not labeled:
        raise NoGoal(f"object {obj.id!r} has no labeled {action} goal")
    return labeled[int(rng.integers(len(labeled)))]


def start_session(scene: Scene, object_id: str, action: str, seed: int,
                  motion: MotionNetParams, goal_params: GoalNetParams | None = None,
                  start: np.ndarray | None = None, skeleton: Skeleton | None = None,
                  nav_radius: float = 0.3, nav_cell: float = 0.25,
                  style_seed: int | None = None) -> Session:
    """Sample a goal for (object, action), plan, and spawn an idle character."""
    from .dataset import idle_frames, _default_skel

    if action not in RUNTIME_ACTIONS:
        raise UnknownObject(f"unsupported action {action!r}; expected one of {RUNTIME_ACTIONS}")
    obj = scene.object_by_id(object_id)
    cfg = motion.cfg
    skel = skeleton or _default_skel()
    rng = np.random.default_rng(seed)
    grid = voxelize_object(obj)
    goal = _sample_world_goal(obj, action, grid, rng, goal_params)
    gf = goal.planar_frame()
    stand = gf.position + gf.forward * STAND_OFFSET
    start = np.zeros(2) if start is None else np.asarray(start, dtype=float)
    nav = build_nav_grid(scene, radius=nav_radius, cell=nav_cell)
    path = plan_path(scene, start, stand, radius=nav_radius, cell=nav_cell, grid=nav)

    seg = path.waypoints[min(1, len(path.waypoints) - 1)] - path.waypoints[0]
    fwd0 = seg / np.linalg.norm(seg) if np.linalg.norm(seg) > 1e-9 else gf.forward
    frames = idle_frames(skel, cfg, start, fwd0, style_seed=style_seed or seed)
    _, sub, _ = next_subgoal(path, start, goal, 0)
    state = build_state(frames, len(frames) - 1, sub, cfg)
    session = Session(scene, obj, action, seed, cfg, skel, motion, goal_params,
                      grid, nav, path, goal, state, frames[-1].root, rng)
    if np.linalg.norm(start - path.waypoints[-1]) <= TRANSITION_DIST:
        session.status = "transitioning"
        session.ramp_start = 0
    return session


def _goal_action_rows(session: Session) -> np.ndarray:
    cfg = session.cfg
    rows = np.zeros((cfg.samples, cfg.actions))
    walk = action_index("walk")
    target = action_index(session.action)
    if session.status == "navigating" or session.ramp_start is None:
        rows[:, walk] = 1.0
        return rows
    # each window sample gets the ramp value at its own time offset, so the
    # future rows lead the current one the way recorded schedules do
    span = TRANSITION_SECONDS * cfg.fps
    for k, off in enumerate(window_indices(cfg)):
        u = float(np.clip((session.frame - session.ramp_start + off) / span, 0.0, 1.0))
        rows[k, walk] = 1.0 - u
        rows[k, target] += u
    return rows


def _write_goal_fields(state: CharacterState, sub: Goal, root: RootTransform,
                       rows: np.ndarray, cfg: StateConfig) -> None:
    gp = to_root_relative(sub.position[None, :], root)[0]
    gd = root.rotation().T @ sub.direction
    state.gp[:] = gp
    state.gd[:] = gd
    state.ga[:] = rows


def step(session: Session, rng: np.random.Generator | None = None) -> FrameEvent:
    """Advance one frame: refresh goal inputs, predict, update root/status."""
    if session.status in ("done", "failed"):
        raise ValueError(f"session already {session.status}")
    rng = rng or session.rng
    cfg = session.cfg
    fps = cfg.fps

    session.cursor, sub, _ = next_subgoal(session.path, session.root.position,
                                          session.goal, session.cursor)
    final_dist = float(np.linalg.norm(session.root.position - session.path.waypoints[-1]))
    if session.status == "navigating" and final_dist <= TRANSITION_DIST:
        session.status = "transitioning"
        session.ramp_start = session.frame
    rows = _goal_action_rows(session)
    _write_goal_fields(session.state, sub, session.root, rows, cfg)

    grid_flat = flatten_grid(encode_relative(session.grid, session.root, session.obj))
    try:
        nxt = predict_next(session.state, grid_flat, rng, session.motion,
                           latent_scale=session.latent_scale)
    except NonFiniteOutput:
        session.status = "failed"
        raise
    mid = cfg.samples // 2
    session.root = apply_root_delta(session.root, nxt.tp[mid], nxt.td[mid])
    session.state = nxt
    session.frame += 1

    target = action_index(session.action)
    if session.status in ("transitioning", "executing"):
        if int(np.argmax(nxt.ta[mid])) == target:
            session.streak += 1
            session.status = "executing"
        else:
            session.streak = 0
        if session.streak >= fps:
            session.status = "done"
    if session.status != "done" and session.frame > SESSION_CAP_SECONDS * fps:
        session.status = "failed"

    joints = from_root_relative(nxt.jp, session.root)
    return FrameEvent(session.frame, joints, session.root, nxt.contacts.copy(),
                      nxt.ta[mid].copy(), sub, session.status)


def resample_style(session: Session, new_seed: int, resample_goal: bool = False) -> Session:
    """Swap the latent stream; optionally draw a fresh goal and replan."""
    session.rng = np.random.default_rng(new_seed)
    if resample_goal:
        goal = _sample_world_goal(session.obj, session.action, session.grid,
                                  session.rng, session.goal_params)
        gf = goal.planar_frame()
        stand = gf.position + gf.forward * STAND_OFFSET
        path = plan_path(session.scene, session.root.position, stand,
                         grid=session.nav)
        session.goal = goal
        session.path = path
        session.cursor = 0
        session.streak = 0
        if np.linalg.norm(session.root.position - session.path.waypoints[-1]) > TRANSITION_DIST:
            session.status = "navigating"
            session.ramp_start = None
        elif session.status == "navigating":
            session.status = "transitioning"
            session.ramp_start = session.frame
    return session


def run_session(session: Session, max_seconds: float = SESSION_CAP_SECONDS,
                state_sink: list | None = None) -> list[FrameEvent]:
    """Step as fast as possible until done/failed or the cap; returns all events.

    state_sink, when given, receives the predicted CharacterState per frame.
    """
    events = []
    max_frames = int(max_seconds * session.cfg.fps)
    while session.status not in ("done", "failed") and session.frame < max_frames:
        try:
            events.append(step(session))
        except NonFiniteOutput:
            break
        if state_sink is not None:
            state_sink.append(session.state)
    return events


def events_action_rows(events: list[FrameEvent]) -> np.ndarray:
    return np.stack([e.action_row for e in events]) if events else np.zeros((0, 0))


def events_joints(events: list[FrameEvent]) -> np.ndarray:
    return np.stack([e.joints for e in events]) if events else np.zeros((0, 0, 3))


# ---------------------------------------------------------------------------
# session service


def scene_payload(scene: Scene, skeleton: Skeleton, fps: int) -> dict:
    objects = []
    for o in scene.objects:
        objects.append({
            "id": o.id,
            "category": o.category,
            "position": [float(v) for v in o.position],
            "yaw": float(o.yaw),
            "boxes": [{"center": [float(v) for v in b.center],
                       "halfExtents": [float(v) for v in b.half_extents],
                       "yaw": float(b.yaw)} for b in o.boxes],
            "goals": [g.to_dict() for g in o.world_goals()],
        })
    if scene.bounds_min is not None:
        lo, hi = scene.bounds_min, scene.bounds_max
    else:
        pts = np.concatenate(object_footprints(scene))
        lo, hi = pts.min(axis=0) - 1.0, pts.max(axis=0) + 1.0
    return {
        "objects": objects,
        "bounds": {"min": [float(v) for v in lo], "max": [float(v) for v in hi]},
        "skeleton": {"names": list(skeleton.names), "parents": [int(p) for p in skeleton.parents]},
        "actions": list(RUNTIME_ACTIONS),
        "fps": fps,
    }


class _LineTransport:
    """Raw TCP with one JSON message per newline."""

    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = b""
        self.closed = False

    def recv_messages(self, timeout: float) -> list[str]:
        ready, _, _ = select.select([self.sock], [], [], max(timeout, 0.0))
        if ready:
            data = self.sock.recv(65536)
            if not data:
                self.closed = True
                return []
            self.buf += data
        out = []
        while b"\n" in self.buf:
            line, self.buf = self.buf.split(b"\n", 1)
            if line.strip():
                out.append(line.decode("utf-8", errors="replace"))
        return out

    def send(self, obj: dict) -> None:
        try:
            self.sock.sendall(json.dumps(obj).encode() + b"\n")
        except OSError:
            self.closed = True


WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"


class _WsTransport:
    """Minimal RFC6455 server endpoint; one JSON message per text frame."""

    def __init__(self, sock: socket.socket, head: bytes):
        self.sock = sock
        self.buf = b""
        self.closed = False
        self._handshake(head)

    def _handshake(self, head: bytes) -> None:
        data = head
        while b"\r\n\r\n" not in data:
            chunk = self.sock.recv(65536)
            if not chunk:
                self.closed = True
                return
            data += chunk
        raw, self.buf = data.split(b"\r\n\r\n", 1)
        key = ""
        for line in raw.decode("utf-8", errors="replace").split("\r\n")[1:]:
            if ":" in line:
                name, value = line.split(":", 1)
                if name.strip().lower() == "sec-websocket-key":
                    key = value.strip()
        accept = base64.b64encode(hashlib.sha1((key + WS_GUID).encode()).digest()).decode()
        self.sock.sendall(
            b"HTTP/1.1 101 Switching Protocols\r\n"
            b"Upgrade: websocket\r\nConnection: Upgrade\r\n"
            b"Sec-WebSocket-Accept: " + accept.encode() + b"\r\n\r\n")

    def recv_messages(self, timeout: float) -> list[str]:
        ready, _, _ = select.select([self.sock], [], [], max(timeout, 0.0))
        if ready:
            data = self.sock.recv(65536)
            if not data:
                self.closed = True
                return []
            self.buf += data
        out = []
        while True:
            frame = self._pop_frame()
            if frame is None:
                break
            opcode, payload = frame
            if opcode == 0x8:
                self._send_raw(0x8, b"")
                self.closed = True
                break
            if opcode == 0x9:
                self._send_raw(0xA, payload)
                continue
            if opcode in (0x0, 0x1, 0x2):
                # browser clients send small unfragmented frames; each data
                # frame carries one JSON message
                text = payload.decode("utf-8", errors="replace").strip()
                if text:
                    out.append(text)
        return out

    def _pop_frame(self):
        buf = self.buf
        if len(buf) < 2:
            return None
        opcode = buf[0] & 0x0F
        masked = buf[1] & 0x80
        ln = buf[1] & 0x7F
        idx = 2
        if ln == 126:
            if len(buf) < 4:
                return None
            ln = int.from_bytes(buf[2:4], "big")
            idx = 4
        elif ln == 127:
            if len(buf) < 10:
                return None
            ln = int.from_bytes(buf[2:10], "big")
            idx = 10
        mask = b""
        if masked:
            if len(buf) < idx + 4:
                return None
            mask = buf[idx:idx + 4]
            idx += 4
        if len(buf) < idx + ln:
            return None
        payload = buf[idx:idx + ln]
        if masked:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        self.buf = buf[idx + ln:]
        return opcode, payload

    def _send_raw(self, opcode: int, payload: bytes) -> None:
        header = bytes([0x80 | opcode])
        n = len(payload)
        if n < 126:
            header += bytes([n])
        elif n < 1 << 16:
            header += bytes([126]) + n.to_bytes(2, "big")
        else:
            header += bytes([127]) + n.to_bytes(8, "big")
        try:
            self.sock.sendall(header + payload)
        except OSError:
            self.closed = True

    def send(self, obj: dict) -> None:
        self._send_raw(0x1, json.dumps(obj).encode())


class SessionService:
    """Threaded TCP service; each connection owns at most one session."""

    def __init__(self, scene: Scene, motion: MotionNetParams,
                 goal_params: GoalNetParams | None = None,
                 skeleton: Skeleton | None = None, host: str = "127.0.0.1",
                 port: int = 8765, start_pos: np.ndarray | None = None,
                 nav_radius: float = 0.3):
        from .dataset import _default_skel

        self.scene = scene
        self.motion = motion
        self.goal_params = goal_params
        self.skeleton = skeleton or _default_skel()
        self.start_pos = start_pos
        self.nav_radius = nav_radius
        self.connections = 0
        service = self

        class Handler(socketserver.BaseRequestHandler):
            def handle(self):
                service.connections += 1
                try:
                    service._serve_connection(self.request)
                except (ConnectionResetError, BrokenPipeError):
                    pass  # peer vanished mid-stream; not an error worth a traceback

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self.server = Server((host, port), Handler)
        self.address = self.server.server_address

    def _serve_connection(self, sock: socket.socket) -> None:
        try:
            head = sock.recv(4, socket.MSG_PEEK)
        except OSError:
            return
        transport = _WsTransport(sock, b"") if head.startswith(b"GET ") else _LineTransport(sock)
        fps = self.motion.cfg.fps
        interval = 1.0 / fps
        session: Session | None = None
        paused = False
        next_t = time.monotonic()
        last_status = None
        while not transport.closed:
            running = (session is not None and not paused
                       and session.status not in ("done", "failed"))
            timeout = max(0.0, next_t - time.monotonic()) if running else 0.05
            for text in transport.recv_messages(timeout):
                reply, session, paused, next_t = self._handle_message(
                    text, session, paused, next_t)
                for r in reply:
                    transport.send(r)
                if session is not None:
                    last_status = session.status
            if transport.closed:
                break
            now = time.monotonic()
            running = (session is not None and not paused
                       and session.status not in ("done", "failed"))
            if running and now >= next_t:
                try:
                    event = step(session)
                    payload = event.to_dict()
                    payload["type"] = "frame"
                    transport.send(payload)
                    if event.status != last_status:
                        transport.send({"type": "status", "status": event.status,
                                        "frame": event.frame})
                        last_status = event.status
                except NonFiniteOutput:
                    transport.send({"type": "status", "status": "failed",
                                    "frame": session.frame})
                    last_status = "failed"
                next_t += interval
                if now - next_t > 1.0:  # resync after stalls
                    next_t = now + interval

    def _handle_message(self, text: str, session: Session | None, paused: bool,
                        next_t: float):
        try:
            msg = json.loads(text)
            if not isinstance(msg, dict) or "type" not in msg:
                raise ValueError("message must be an object with a type")
        except ValueError as e:
            return [{"type": "error", "message": f"malformed message: {e}"}], session, paused, next_t
        kind = msg["type"]
        if kind == "hello":
            return [{"type": "scene",
                     "scene": scene_payload(self.scene, self.skeleton,
                                            self.motion.cfg.fps)}], session, paused, next_t
        if kind == "start":
            try:
                session = start_session(
                    self.scene, str(msg.get("objectId", "")), str(msg.get("action", "")),
                    int(msg.get("seed", 0)), self.motion, self.goal_params,
                    start=self.start_pos, skeleton=self.skeleton,
                    nav_radius=self.nav_radius)
            except Exception as e:
                return [{"type": "error", "message": f"{type(e).__name__}: {e}"}], session, paused, next_t
            reply = [{"type": "status", "status": session.status, "frame": 0,
                      "path": [[float(v) for v in w] for w in session.path.waypoints],
                      "goal": session.goal.to_dict()}]
            return reply, session, False, time.monotonic()
        if kind == "resample":
            if session is None:
                return [{"type": "error", "message": "no active session"}], session, paused, next_t
            try:
                resample_style(session, int(msg.get("seed", 0)),
                               bool(msg.get("resampleGoal", False)))
            except Exception as e:
                return [{"type": "error", "message": f"{type(e).__name__}: {e}"}], session, paused, next_t
            reply = [{"type": "status", "status": session.status, "frame": session.frame,
                      "path": [[float(v) for v in w] for w in session.path.waypoints],
                      "goal": session.goal.to_dict()}]
            return reply, session, paused, next_t
        if kind == "pause":
            return [{"type": "status", "status": "paused",
                     "frame": session.frame if session else 0}], session, True, next_t
        if kind == "resume":
            status = session.status if session else "idle"
            return [{"type": "status", "status": status,
                     "frame": session.frame if session else 0}], session, False, time.monotonic()
        return [{"type": "error", "message": f"unknown message type {kind!r}"}], session, paused, next_t

    def serve_forever(self, max_seconds: float | None = None) -> dict:
        if max_seconds is not None:
            timer = threading.Timer(max_seconds, self.server.shutdown)
            timer.daemon = True
            timer.start()
        try:
            self.server.serve_forever(poll_interval=0.1)
        except KeyboardInterrupt:
            pass
        finally:
            self.server.server_close()
        return {"address": list(self.address), "connections": self.connections}

    def shutdown(self) -> None:
        self.server.shutdown()


def serve(scene: Scene, motion: MotionNetParams, goal_params: GoalNetParams | None = None,
          host: str = "127.0.0.1", port: int = 8765, max_seconds: float | None = None,
          skeleton: Skeleton | None = None, start_pos=None, nav_radius: float = 0.3,
          ready_callback=None) -> dict:
    service = SessionService(scene, motion, goal_params, skeleton, host, port,
                             start_pos=start_pos, nav_radius=nav_radius)
    if ready_callback:
        ready_callback(service)
    return service.serve_forever(max_seconds)
