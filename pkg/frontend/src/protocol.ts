/**
 * Client side of the frame-streaming wire protocol (docs/protocol.md):
 * each frame is one JSON text message (the header) followed by one binary
 * message (the payload); every reply is one JSON text message.
 */

export type FrameFormat = "jpeg" | "png" | "gray8";

export interface FrameHeader {
  id: number;
  format: FrameFormat;
  width?: number;
  height?: number;
}

export interface FaceBox {
  x: number;
  y: number;
  side: number;
}

export interface FrameReply {
  type: "result";
  id: number;
  face: FaceBox | null;
  emotion: string | null;
  current_emotion: string | null;
  scores: Record<string, number> | null;
  latency_ms: number;
  dropped: number;
}

export interface ErrorReply {
  type: "error";
  code: string;
  message: string;
  id: number | null;
}

export type ServerReply = FrameReply | ErrorReply;

export interface EncodedFrame {
  headerJson: string;
  payload: Uint8Array;
}

/** Serialize one frame into the two wire messages. */
export function encodeFrame(header: FrameHeader, payload: Uint8Array): EncodedFrame {
  if (header.format === "gray8") {
    if (!header.width || !header.height) {
      throw new Error("gray8 frames need width and height");
    }
    if (payload.length !== header.width * header.height) {
      throw new Error(
        `gray8 payload is ${payload.length} bytes, expected ${header.width * header.height}`,
      );
    }
  }
  const wire: Record<string, unknown> = { id: header.id, format: header.format };
  if (header.width !== undefined) wire.width = header.width;
  if (header.height !== undefined) wire.height = header.height;
  return { headerJson: JSON.stringify(wire), payload };
}

export function parseReply(text: string): ServerReply {
  const body = JSON.parse(text) as Partial<ServerReply>;
  if (body.type === "result") {
    const r = body as FrameReply;
    if (typeof r.id !== "number") throw new Error("result reply missing id");
    return r;
  }
  if (body.type === "error") {
    const e = body as ErrorReply;
    if (typeof e.code !== "string") throw new Error("error reply missing code");
    return e;
  }
  throw new Error(`unknown reply type: ${String(body.type)}`);
}

/** Convert RGBA canvas pixels to the gray8 payload (Rec.601 luma). */
export function rgbaToGray8(rgba: Uint8ClampedArray, width: number, height: number): Uint8Array {
  const out = new Uint8Array(width * height);
  for (let i = 0, p = 0; i < out.length; i++, p += 4) {
    out[i] = Math.round(0.299 * rgba[p] + 0.587 * rgba[p + 1] + 0.114 * rgba[p + 2]);
  }
  return out;
}
