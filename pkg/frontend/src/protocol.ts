/** Wire types for the newline-delimited JSON session protocol.
 *
 * The server speaks the same messages over raw TCP (one JSON per line) and
 * over WebSocket (one JSON per text frame). The viewer adds no private
 * message types.
 */

export type Vec2 = [number, number];
export type Vec3 = [number, number, number];

export interface GoalPayload {
  position: Vec3;
  direction: Vec3;
  action: string;
}

export interface BoxPayload {
  center: Vec3;
  halfExtents: Vec3;
  yaw: number;
}

export interface ObjectPayload {
  id: string;
  category: string;
  position: Vec3;
  yaw: number;
  boxes: BoxPayload[];
  goals: GoalPayload[];
}

export interface ScenePayload {
  objects: ObjectPayload[];
  bounds: { min: Vec2; max: Vec2 };
  skeleton: { names: string[]; parents: number[] };
  actions: string[];
  fps: number;
}

export interface FramePayload {
  frame: number;
  joints: Vec3[];
  root: { position: Vec2; forward: Vec2 };
  contacts: number[];
  actions: number[];
  subgoal: GoalPayload;
  status: string;
}

export interface StatusPayload {
  status: string;
  frame: number;
  path?: Vec2[];
  goal?: GoalPayload;
}

export type ServerMessage =
  | { type: "scene"; scene: ScenePayload }
  | ({ type: "status" } & StatusPayload)
  | ({ type: "frame" } & FramePayload)
  | { type: "error"; message: string };

export type ClientMessage =
  | { type: "hello" }
  | { type: "start"; objectId: string; action: string; seed: number }
  | { type: "resample"; seed: number; resampleGoal?: boolean }
  | { type: "pause" }
  | { type: "resume" };

export class ProtocolError extends Error {}

function need(cond: boolean, what: string): void {
  if (!cond) throw new ProtocolError(`bad server message: ${what}`);
}

/** Parse one server line; throws ProtocolError on anything malformed. */
export function parseServerLine(line: string): ServerMessage {
  let raw: unknown;
  try {
    raw = JSON.parse(line);
  } catch {
    throw new ProtocolError(`not JSON: ${line.slice(0, 80)}`);
  }
  need(typeof raw === "object" && raw !== null, "not an object");
  const msg = raw as Record<string, unknown>;
  switch (msg.type) {
    case "scene": {
      const scene = msg.scene as ScenePayload;
      need(typeof scene === "object" && scene !== null, "scene payload missing");
      need(Array.isArray(scene.objects), "scene.objects missing");
      need(Array.isArray(scene.actions), "scene.actions missing");
      need(typeof scene.fps === "number", "scene.fps missing");
      need(Array.isArray(scene.skeleton?.parents), "scene.skeleton missing");
      return { type: "scene", scene };
    }
    case "status": {
      need(typeof msg.status === "string", "status string missing");
      need(typeof msg.frame === "number", "status frame missing");
      return msg as ServerMessage;
    }
    case "frame": {
      need(typeof msg.frame === "number", "frame index missing");
      need(Array.isArray(msg.joints), "frame joints missing");
      const root = msg.root as FramePayload["root"];
      need(Array.isArray(root?.position) && root.position.length === 2, "frame root missing");
      need(typeof msg.status === "string", "frame status missing");
      return msg as ServerMessage;
    }
    case "error": {
      need(typeof msg.message === "string", "error message missing");
      return msg as ServerMessage;
    }
    default:
      throw new ProtocolError(`unknown message type ${String(msg.type)}`);
  }
}

export function encodeClient(msg: ClientMessage): string {
  return JSON.stringify(msg) + "\n";
}

/** Accumulates stream chunks and yields complete lines. */
export class LineSplitter {
  private buf = "";

  push(chunk: string): string[] {
    this.buf += chunk;
    const parts = this.buf.split("\n");
    this.buf = parts.pop() ?? "";
    return parts.map((p) => p.trim()).filter((p) => p.length > 0);
  }
}
