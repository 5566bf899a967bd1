/** View state: everything the renderer draws, fed purely by server messages.
 *
 * The model never extrapolates; it renders only frames received. Root traces
 * are recorded per trajectory (one per start/resample acknowledgement) so
 * resampling overlays visibly distinct polylines.
 */

import {
  ClientMessage,
  FramePayload,
  GoalPayload,
  ProtocolError,
  ScenePayload,
  ServerMessage,
  Vec2,
  parseServerLine,
} from "./protocol.js";

export interface RootTrace {
  label: string;
  points: Vec2[];
}

/** Bounded frame queue; drops the oldest frame on overflow. */
export class FrameBuffer {
  private items: FramePayload[] = [];
  dropped = 0;

  constructor(readonly capacity: number) {
    if (capacity < 1) throw new Error("capacity must be positive");
  }

  push(f: FramePayload): void {
    if (this.items.length >= this.capacity) {
      this.items.shift();
      this.dropped += 1;
    }
    this.items.push(f);
  }

  next(): FramePayload | null {
    return this.items.shift() ?? null;
  }

  get size(): number {
    return this.items.length;
  }

  clear(): void {
    this.items = [];
  }
}

export type ConnectionState = "connecting" | "open" | "closed";

export class ViewModel {
  scene: ScenePayload | null = null;
  buffer = new FrameBuffer(256);
  status = "idle";
  path: Vec2[] = [];
  goal: GoalPayload | null = null;
  traces: RootTrace[] = [];
  toasts: string[] = [];
  connection: ConnectionState = "connecting";
  selectedAction = "sit";
  seed = 0;
  playing = true;
  /** Last frame handed to the renderer; null until the stream delivers one. */
  lastFrame: FramePayload | null = null;

  /** Feed one raw line from the transport. Malformed lines become toasts;
   * the connection is kept. */
  handleLine(line: string): void {
    let msg: ServerMessage;
    try {
      msg = parseServerLine(line);
    } catch (e) {
      if (e instanceof ProtocolError) {
        this.toast(e.message);
        return;
      }
      throw e;
    }
    this.apply(msg);
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "scene":
        this.scene = msg.scene;
        if (!msg.scene.actions.includes(this.selectedAction) && msg.scene.actions.length > 0) {
          this.selectedAction = msg.scene.actions[0];
        }
        break;
      case "status":
        this.status = msg.status;
        if (msg.path) {
          this.path = msg.path;
          this.goal = msg.goal ?? this.goal;
          // a path acknowledges start/resample: begin a fresh trace
          this.traces.push({ label: `seed ${this.seed}`, points: [] });
        }
        break;
      case "frame":
        this.buffer.push(msg);
        if (this.traces.length > 0) {
          this.traces[this.traces.length - 1].points.push([
            msg.root.position[0],
            msg.root.position[1],
          ]);
        }
        break;
      case "error":
        this.toast(msg.message);
        break;
    }
  }

  /** Click on an object: a start command, or null for empty floor / no scene. */
  commandGoal(objectId: string | null): ClientMessage | null {
    if (!this.scene || !objectId) return null;
    if (!this.scene.objects.some((o) => o.id === objectId)) return null;
    this.buffer.clear();
    this.playing = true;
    return { type: "start", objectId, action: this.selectedAction, seed: this.seed };
  }

  /** New style seed for the running trajectory. */
  resample(): ClientMessage {
    this.seed += 1;
    return { type: "resample", seed: this.seed };
  }

  pause(): ClientMessage {
    this.playing = false;
    return { type: "pause" };
  }

  resume(): ClientMessage {
    this.playing = true;
    return { type: "resume" };
  }

  /** Pop the next frame for rendering; pause freezes playback in place. */
  nextFrame(): FramePayload | null {
    if (!this.playing) return null;
    const f = this.buffer.next();
    if (f) this.lastFrame = f;
    return f;
  }

  markOpen(): void {
    this.connection = "open";
  }

  markClosed(): void {
    this.connection = "closed";
  }

  toast(message: string): void {
    this.toasts.push(message);
    if (this.toasts.length > 8) this.toasts.shift();
  }

  /** Largest root distance between two traces over their shared prefix. */
  static traceDivergence(a: RootTrace, b: RootTrace): number {
    const n = Math.min(a.points.length, b.points.length);
    let worst = 0;
    for (let i = 0; i < n; i++) {
      const dx = a.points[i][0] - b.points[i][0];
      const dz = a.points[i][1] - b.points[i][1];
      worst = Math.max(worst, Math.hypot(dx, dz));
    }
    return worst;
  }
}
