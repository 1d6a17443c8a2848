/**
 * Webcam capture: grabs frames from getUserMedia at a fixed rate and hands
 * them over as gray8 payloads sized for the service.
 */

import { rgbaToGray8 } from "./protocol.js";

export const CAPTURE_FPS = 5;
export const CAPTURE_WIDTH = 320;
export const CAPTURE_HEIGHT = 240;

export interface CapturedFrame {
  gray: Uint8Array;
  width: number;
  height: number;
}

export class WebcamCapture {
  private video: HTMLVideoElement;
  private canvas: HTMLCanvasElement;
  private stream: MediaStream | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private width = CAPTURE_WIDTH,
    private height = CAPTURE_HEIGHT,
  ) {
    this.video = document.createElement("video");
    this.video.muted = true;
    this.video.playsInline = true;
    this.canvas = document.createElement("canvas");
    this.canvas.width = width;
    this.canvas.height = height;
  }

  /** Throws if the user denies camera access; the caller shows instructions. */
  async start(onFrame: (frame: CapturedFrame) => void, fps = CAPTURE_FPS): Promise<void> {
    this.stream = await navigator.mediaDevices.getUserMedia({
      video: { width: 640, height: 480 },
      audio: false,
    });
    this.video.srcObject = this.stream;
    await this.video.play();
    const ctx = this.canvas.getContext("2d", { willReadFrequently: true });
    if (!ctx) throw new Error("canvas 2d context unavailable");
    this.timer = setInterval(() => {
      if (this.video.readyState < 2) return;
      ctx.drawImage(this.video, 0, 0, this.width, this.height);
      const rgba = ctx.getImageData(0, 0, this.width, this.height).data;
      onFrame({ gray: rgbaToGray8(rgba, this.width, this.height), width: this.width, height: this.height });
    }, 1000 / fps);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.stream?.getTracks().forEach((track) => track.stop());
    this.stream = null;
  }
}
