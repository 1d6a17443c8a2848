/**
 * The Happiness game: dodge falling debris with the arrow keys while the
 * webcam streams your face to the recognition service. Looking happy slows
 * the debris down; anything else speeds it up.
 */

import { CONFIG, GameState, newGame, restart, step, updateDifficulty } from "./game.js";
import { StreamClient } from "./client.js";
import { FaceBox, encodeFrame } from "./protocol.js";
import { CAPTURE_FPS, WebcamCapture } from "./webcam.js";

const canvas = document.getElementById("game") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusLine = document.getElementById("status")!;
const emotionLine = document.getElementById("emotion")!;
const serverInput = document.getElementById("server") as HTMLInputElement;
const connectButton = document.getElementById("connect") as HTMLButtonElement;
const preview = document.getElementById("preview") as HTMLCanvasElement;
const previewCtx = preview.getContext("2d")!;

canvas.width = CONFIG.width;
canvas.height = CONFIG.height;

let state: GameState = newGame(Date.now() | 0);
let client: StreamClient | null = null;
let lastFace: FaceBox | null = null;
let lastFrame: { gray: Uint8Array; width: number; height: number } | null = null;
let frameId = 0;
const pressed = new Set<string>();

window.addEventListener("keydown", (e) => {
  pressed.add(e.code);
  if (e.code === "Enter" && state.gameOver) {
    state = restart(state, Date.now() | 0);
  }
});
window.addEventListener("keyup", (e) => pressed.delete(e.code));

function connect(): void {
  client?.close();
  const url = serverInput.value.replace(/^http/, "ws").replace(/\/$/, "") + "/ws";
  client = new StreamClient(url);
  client.onConnect = () => {
    statusLine.textContent = `connected to ${url}`;
  };
  client.onDisconnect = () => {
    statusLine.textContent = "disconnected, retrying with backoff";
    lastFace = null;
    state = updateDifficulty(state, null); // lost service counts as not happy
  };
  client.onReply = (reply) => {
    if (reply.type === "error") {
      console.warn("service error reply", reply);
      return;
    }
    lastFace = reply.face;
    state = updateDifficulty(state, reply.current_emotion);
    emotionLine.textContent = reply.current_emotion
      ? `current emotion: ${reply.current_emotion}`
      : "current emotion: none (no face seen yet)";
  };
  client.connect();
}

connectButton.addEventListener("click", connect);

async function startCamera(): Promise<void> {
  const capture = new WebcamCapture();
  try {
    await capture.start((frame) => {
      lastFrame = frame;
      if (client?.connected) {
        frameId += 1;
        client.sendFrame(
          encodeFrame(
            { id: frameId, format: "gray8", width: frame.width, height: frame.height },
            frame.gray,
          ),
        );
      }
    }, CAPTURE_FPS);
    statusLine.textContent = "camera running; connect to a service to play";
  } catch {
    statusLine.textContent =
      "camera access denied: allow webcam use in the browser prompt, then reload";
  }
}

function drawPreview(): void {
  if (!lastFrame) return;
  const { gray, width, height } = lastFrame;
  const img = previewCtx.createImageData(width, height);
  for (let i = 0; i < gray.length; i++) {
    img.data[i * 4] = img.data[i * 4 + 1] = img.data[i * 4 + 2] = gray[i];
    img.data[i * 4 + 3] = 255;
  }
  preview.width = width;
  preview.height = height;
  previewCtx.putImageData(img, 0, 0);
  if (lastFace) {
    previewCtx.strokeStyle = "#3dd13d";
    previewCtx.lineWidth = 2;
    previewCtx.strokeRect(lastFace.x, lastFace.y, lastFace.side, lastFace.side);
  }
}

let lastTick = performance.now();
function loop(now: number): void {
  const dt = Math.min(50, now - lastTick);
  lastTick = now;
  state = step(state, { left: pressed.has("ArrowLeft"), right: pressed.has("ArrowRight") }, dt);

  ctx.fillStyle = "#101018";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  ctx.fillStyle = "#e0b040";
  for (const d of state.debris) {
    ctx.fillRect(d.x, d.y, CONFIG.debrisSize, CONFIG.debrisSize);
  }
  ctx.fillStyle = "#58c0f0";
  ctx.fillRect(
    state.playerX - CONFIG.playerWidth / 2,
    CONFIG.height - CONFIG.playerHeight,
    CONFIG.playerWidth,
    CONFIG.playerHeight,
  );
  ctx.fillStyle = "#ffffff";
  ctx.font = "16px monospace";
  ctx.fillText(`health ${state.health}`, 12, 22);
  ctx.fillText(`spawn interval ${state.spawnIntervalMs} ms`, 12, 42);
  if (state.gameOver) {
    ctx.font = "32px monospace";
    ctx.fillText("game over - press Enter to restart", 140, CONFIG.height / 2);
  }
  drawPreview();
  requestAnimationFrame(loop);
}

startCamera();
requestAnimationFrame(loop);
