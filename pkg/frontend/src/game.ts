/**
 * Headless game rules for the Happiness game: a player dodges falling debris
 * on a 2D plane, and the debris spawn rate is coupled to the player's
 * detected emotion (slower while happy, faster otherwise).
 *
 * Everything here is pure state-in/state-out so the rules can be tested and
 * replayed deterministically: randomness lives in the state as a seeded
 * 32-bit generator.
 */

export const CONFIG = {
  width: 768,
  height: 480,
  playerWidth: 36,
  playerHeight: 24,
  playerSpeed: 280, // px/s
  debrisSize: 22,
  debrisSpeedMin: 120, // px/s
  debrisSpeedMax: 260,
  spawnIntervalMin: 400, // ms
  spawnIntervalMax: 2400,
  spawnIntervalStep: 100,
  spawnIntervalStart: 1400,
  collisionDamage: 10,
  maxHealth: 100,
};

export interface Debris {
  x: number;
  y: number;
  vy: number; // px/s downward
}

export interface GameState {
  playerX: number;
  debris: Debris[];
  health: number;
  spawnIntervalMs: number;
  msUntilSpawn: number;
  currentEmotion: string | null;
  gameOver: boolean;
  rngState: number;
}

export interface PlayerInput {
  left: boolean;
  right: boolean;
}

/** Deterministic 32-bit generator (mulberry32). */
export function nextRandom(state: number): { value: number; state: number } {
  let a = (state + 0x6d2b79f5) | 0;
  let t = Math.imul(a ^ (a >>> 15), 1 | a);
  t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
  return { value: ((t ^ (t >>> 14)) >>> 0) / 4294967296, state: a };
}

export function newGame(seed: number): GameState {
  return {
    playerX: CONFIG.width / 2,
    debris: [],
    health: CONFIG.maxHealth,
    spawnIntervalMs: CONFIG.spawnIntervalStart,
    msUntilSpawn: CONFIG.spawnIntervalStart,
    currentEmotion: null,
    gameOver: false,
    rngState: seed | 0,
  };
}

function clampInterval(ms: number): number {
  return Math.min(CONFIG.spawnIntervalMax, Math.max(CONFIG.spawnIntervalMin, ms));
}

/**
 * One difficulty tick from a service reply: happiness widens the spawn
 * interval by one step (fewer debris), anything else - including no face
 * or a lost connection - narrows it.
 */
export function updateDifficulty(state: GameState, emotion: string | null): GameState {
  const delta =
    emotion === "happiness" ? CONFIG.spawnIntervalStep : -CONFIG.spawnIntervalStep;
  return {
    ...state,
    currentEmotion: emotion,
    spawnIntervalMs: clampInterval(state.spawnIntervalMs + delta),
  };
}

function playerBox(state: GameState) {
  return {
    left: state.playerX - CONFIG.playerWidth / 2,
    right: state.playerX + CONFIG.playerWidth / 2,
    top: CONFIG.height - CONFIG.playerHeight,
    bottom: CONFIG.height,
  };
}

function overlaps(d: Debris, box: ReturnType<typeof playerBox>): boolean {
  return (
    d.x < box.right &&
    d.x + CONFIG.debrisSize > box.left &&
    d.y < box.bottom &&
    d.y + CONFIG.debrisSize > box.top
  );
}

/**
 * Resolve collisions: each debris overlapping the player's bounding box
 * costs health and disappears; at zero health the game is over.
 */
export function collisionStep(state: GameState): GameState {
  const box = playerBox(state);
  let hits = 0;
  const debris = state.debris.filter((d) => {
    if (overlaps(d, box)) {
      hits += 1;
      return false;
    }
    return true;
  });
  if (hits === 0) {
    return state;
  }
  const health = Math.max(0, state.health - hits * CONFIG.collisionDamage);
  return { ...state, debris, health, gameOver: health <= 0 };
}

/**
 * Advance the simulation by dtMs. Pure given (state, input, dt): movement,
 * spawning from the seeded generator, falling, collisions, cleanup.
 */
export function step(state: GameState, input: PlayerInput, dtMs: number): GameState {
  if (state.gameOver) {
    return state;
  }
  const dt = dtMs / 1000;
  let playerX = state.playerX;
  if (input.left) playerX -= CONFIG.playerSpeed * dt;
  if (input.right) playerX += CONFIG.playerSpeed * dt;
  playerX = Math.min(CONFIG.width - CONFIG.playerWidth / 2, Math.max(CONFIG.playerWidth / 2, playerX));

  let { rngState } = state;
  const debris = state.debris.map((d) => ({ ...d, y: d.y + d.vy * dt }));
  let msUntilSpawn = state.msUntilSpawn - dtMs;
  while (msUntilSpawn <= 0) {
    const rx = nextRandom(rngState);
    const rv = nextRandom(rx.state);
    rngState = rv.state;
    debris.push({
      x: rx.value * (CONFIG.width - CONFIG.debrisSize),
      y: -CONFIG.debrisSize,
      vy: CONFIG.debrisSpeedMin + rv.value * (CONFIG.debrisSpeedMax - CONFIG.debrisSpeedMin),
    });
    msUntilSpawn += state.spawnIntervalMs;
  }

  const next = collisionStep({
    ...state,
    playerX,
    debris: debris.filter((d) => d.y < CONFIG.height + CONFIG.debrisSize),
    msUntilSpawn,
    rngState,
  });
  return next;
}

export function restart(state: GameState, seed: number): GameState {
  const fresh = newGame(seed);
  return { ...fresh, currentEmotion: state.currentEmotion };
}
