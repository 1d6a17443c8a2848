/**
 * WebSocket client for the recognition service with reconnect-and-backoff.
 * While disconnected the game is told the emotion is null (not happy).
 */

import { EncodedFrame, ServerReply, parseReply } from "./protocol.js";

export interface SocketLike {
  send(data: string | Uint8Array): void;
  close(): void;
  onmessage: ((event: { data: unknown }) => void) | null;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onerror: ((event: unknown) => void) | null;
  readyState: number;
}

export type SocketFactory = (url: string) => SocketLike;

const OPEN = 1;

export class StreamClient {
  onReply: ((reply: ServerReply) => void) | null = null;
  onDisconnect: (() => void) | null = null;
  onConnect: (() => void) | null = null;

  private socket: SocketLike | null = null;
  private retries = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private url: string,
    private factory: SocketFactory = (u) => new WebSocket(u) as unknown as SocketLike,
    private baseBackoffMs = 500,
    private maxBackoffMs = 8000,
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  get connected(): boolean {
    return this.socket !== null && this.socket.readyState === OPEN;
  }

  /** Send one frame; returns false (and drops it) while disconnected. */
  sendFrame(frame: EncodedFrame): boolean {
    if (!this.connected || !this.socket) {
      return false;
    }
    this.socket.send(frame.headerJson);
    this.socket.send(frame.payload);
    return true;
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.socket?.close();
    this.socket = null;
  }

  private open(): void {
    const socket = this.factory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.retries = 0;
      this.onConnect?.();
    };
    socket.onmessage = (event) => {
      if (typeof event.data === "string") {
        try {
          this.onReply?.(parseReply(event.data));
        } catch {
          // malformed reply: skip the frame, keep streaming
        }
      }
    };
    socket.onerror = () => socket.close();
    socket.onclose = () => {
      this.socket = null;
      this.onDisconnect?.();
      if (!this.closed) {
        const backoff = Math.min(this.maxBackoffMs, this.baseBackoffMs * 2 ** this.retries);
        this.retries += 1;
        this.timer = setTimeout(() => this.open(), backoff);
      }
    };
  }
}
