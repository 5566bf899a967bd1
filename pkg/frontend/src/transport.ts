/** WebSocket transport with reconnect; the server upgrades in-place when the
 * first bytes look like an HTTP GET, so the browser just dials the same port
 * the TCP clients use. */

import { ClientMessage, encodeClient } from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: (() => void) | null;
  onerror: (() => void) | null;
}

export interface ConnectionEvents {
  onLine(line: string): void;
  onOpen(): void;
  onClose(): void;
}

export class WsConnection {
  private sock: SocketLike | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = false;

  constructor(
    private readonly url: string,
    private readonly events: ConnectionEvents,
    private readonly factory: (url: string) => SocketLike = (u) =>
      new WebSocket(u) as unknown as SocketLike,
    private readonly retryMs = 1000,
  ) {
    this.dial();
  }

  private dial(): void {
    const sock = this.factory(this.url);
    this.sock = sock;
    sock.onopen = () => this.events.onOpen();
    sock.onmessage = (ev) => {
      // one JSON message per websocket text frame; tolerate batched lines
      const text = String(ev.data);
      for (const line of text.split("\n")) {
        const t = line.trim();
        if (t) this.events.onLine(t);
      }
    };
    const drop = () => {
      if (this.sock !== sock) return;
      this.sock = null;
      this.events.onClose();
      if (!this.stopped) {
        this.timer = setTimeout(() => this.dial(), this.retryMs);
      }
    };
    sock.onclose = drop;
    sock.onerror = drop;
  }

  send(msg: ClientMessage): void {
    // websocket framing already delimits messages; the newline is harmless
    this.sock?.send(encodeClient(msg));
  }

  close(): void {
    this.stopped = true;
    if (this.timer) clearTimeout(this.timer);
    this.sock?.close();
  }
}
