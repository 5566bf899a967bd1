import { describe, expect, it, vi } from "vitest";
import { SocketLike, WsConnection } from "../src/transport.js";

class FakeSocket implements SocketLike {
  sent: string[] = [];
  onopen: (() => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;

  send(data: string): void {
    this.sent.push(data);
  }

  close(): void {
    this.onclose?.();
  }
}

describe("WsConnection", () => {
  it("forwards opens, splits batched lines, and encodes sends", () => {
    const socks: FakeSocket[] = [];
    const lines: string[] = [];
    let opens = 0;
    const conn = new WsConnection(
      "ws://x",
      { onLine: (l) => lines.push(l), onOpen: () => opens++, onClose: () => {} },
      () => {
        const s = new FakeSocket();
        socks.push(s);
        return s;
      },
    );
    expect(socks.length).toBe(1);
    socks[0].onopen!();
    expect(opens).toBe(1);
    socks[0].onmessage!({ data: '{"type":"status","status":"idle","frame":0}\n{"type":"error","message":"x"}' });
    expect(lines.length).toBe(2);
    conn.send({ type: "hello" });
    expect(JSON.parse(socks[0].sent[0])).toEqual({ type: "hello" });
    conn.close();
  });

  it("redials after a drop until closed deliberately", async () => {
    vi.useFakeTimers();
    const socks: FakeSocket[] = [];
    let drops = 0;
    const conn = new WsConnection(
      "ws://x",
      { onLine: () => {}, onOpen: () => {}, onClose: () => drops++ },
      () => {
        const s = new FakeSocket();
        socks.push(s);
        return s;
      },
      50,
    );
    socks[0].onclose!();
    expect(drops).toBe(1);
    await vi.advanceTimersByTimeAsync(60);
    expect(socks.length).toBe(2);
    socks[1].onerror!(); // error also counts as a drop, but only once per socket
    expect(drops).toBe(2);
    await vi.advanceTimersByTimeAsync(60);
    expect(socks.length).toBe(3);
    conn.close();
    await vi.advanceTimersByTimeAsync(200);
    expect(socks.length).toBe(3);
    vi.useRealTimers();
  });
});
