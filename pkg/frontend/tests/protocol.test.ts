import { describe, expect, it } from "vitest";
import {
  LineSplitter,
  ProtocolError,
  encodeClient,
  parseServerLine,
} from "../src/protocol.js";

describe("parseServerLine", () => {
  it("parses a scene message", () => {
    const line = JSON.stringify({
      type: "scene",
      scene: {
        objects: [],
        bounds: { min: [-1, -1], max: [1, 1] },
        skeleton: { names: ["root"], parents: [-1] },
        actions: ["sit"],
        fps: 30,
      },
    });
    const msg = parseServerLine(line);
    expect(msg.type).toBe("scene");
    if (msg.type === "scene") expect(msg.scene.fps).toBe(30);
  });

  it("parses frame and status messages", () => {
    const frame = parseServerLine(
      JSON.stringify({
        type: "frame",
        frame: 3,
        joints: [[0, 1, 0]],
        root: { position: [0.5, 0.25], forward: [0, 1] },
        contacts: [0, 0, 0, 0, 0],
        actions: [0, 0, 1, 0, 0],
        subgoal: { position: [1, 0, 1], direction: [0, 0, 1], action: "walk" },
        status: "navigating",
      }),
    );
    expect(frame.type).toBe("frame");
    const status = parseServerLine(
      JSON.stringify({ type: "status", status: "paused", frame: 10 }),
    );
    expect(status.type).toBe("status");
  });

  it("rejects junk, missing fields, and unknown types", () => {
    expect(() => parseServerLine("not json{")).toThrow(ProtocolError);
    expect(() => parseServerLine('"just a string"')).toThrow(ProtocolError);
    expect(() => parseServerLine('{"type":"frame","frame":1}')).toThrow(ProtocolError);
    expect(() => parseServerLine('{"type":"teleport"}')).toThrow(ProtocolError);
    expect(() => parseServerLine('{"type":"error"}')).toThrow(ProtocolError);
  });
});

describe("encodeClient", () => {
  it("emits one newline-terminated JSON object", () => {
    const line = encodeClient({ type: "start", objectId: "chair", action: "sit", seed: 4 });
    expect(line.endsWith("\n")).toBe(true);
    expect(JSON.parse(line)).toEqual({
      type: "start",
      objectId: "chair",
      action: "sit",
      seed: 4,
    });
  });
});

describe("LineSplitter", () => {
  it("reassembles lines across chunk boundaries", () => {
    const s = new LineSplitter();
    expect(s.push('{"a":')).toEqual([]);
    expect(s.push('1}\n{"b":2}\n{"c"')).toEqual(['{"a":1}', '{"b":2}']);
    expect(s.push(":3}\n")).toEqual(['{"c":3}']);
  });

  it("drops blank lines", () => {
    const s = new LineSplitter();
    expect(s.push("\n  \n{\"x\":1}\n")).toEqual(['{"x":1}']);
  });
});
