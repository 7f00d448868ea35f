/**
 * ViewState and its pure transition functions.
 *
 * Everything here is a plain function from state to state; no DOM, no
 * network. The mapping from a state to its render request (requestOf,
 * queryOf) is likewise pure, so identical states always produce identical
 * requests and the coalescer can compare intents by value.
 */

import { Meta, RenderParams } from "./types.js";

export interface ViewState {
  azimuth: number; // degrees, free-running
  elevation: number; // degrees, clamped to the open interval (-90, 90)
  radius: number; // > 0
  frame: number; // integer in [0, frames-1]
  frames: number; // total frame count from /meta
  playing: boolean;
  width: number;
  height: number;
  useEss: boolean;
}

// open interval: exactly +-90 would put the eye on the pole axis and the
// look-at up vector would degenerate
const EL_MAX = 89.9;
const MIN_RADIUS = 1e-6;

export function diagonalOf(meta: Meta): number {
  const lo = meta.bounds.min;
  const hi = meta.bounds.max;
  let s = 0;
  for (let i = 0; i < 3; i++) {
    const d = hi[i] - lo[i];
    s += d * d;
  }
  return Math.sqrt(s);
}

/** Starting state per the init contract: camera at 2x the bounds diagonal. */
export function initialState(meta: Meta, width = 256, height = 256): ViewState {
  const cam = meta.default_camera;
  return {
    azimuth: cam.azimuth,
    elevation: clampElevation(cam.elevation),
    radius: 2.0 * diagonalOf(meta),
    frame: 0,
    frames: meta.frames,
    playing: false,
    width,
    height,
    useEss: true,
  };
}

function clampElevation(el: number): number {
  return Math.max(-EL_MAX, Math.min(EL_MAX, el));
}

function clampFrame(frame: number, frames: number): number {
  const f = Math.round(frame);
  if (f < 0) return 0;
  if (f > frames - 1) return frames - 1;
  return f;
}

/**
 * Apply a drag delta in pixels. Returns the same object (by reference) for
 * a zero drag so callers can detect "no change, no request" with ===.
 */
export function orbitUpdate(state: ViewState, dx: number, dy: number): ViewState {
  if (dx === 0 && dy === 0) return state;
  const scale = 0.4; // degrees per pixel
  return {
    ...state,
    azimuth: state.azimuth + dx * scale,
    elevation: clampElevation(state.elevation - dy * scale),
  };
}

/** Multiplicative zoom; factor > 1 moves away from the scene. */
export function zoom(state: ViewState, factor: number): ViewState {
  if (factor === 1) return state;
  return { ...state, radius: Math.max(MIN_RADIUS, state.radius * factor) };
}

export function scrub(state: ViewState, frame: number): ViewState {
  const f = clampFrame(frame, state.frames);
  if (f === state.frame) return state;
  return { ...state, frame: f };
}

export function setPlaying(state: ViewState, playing: boolean): ViewState {
  if (playing === state.playing) return state;
  // pressing play on the last frame restarts from 0, otherwise it would
  // stop again on the next tick
  if (playing && state.frame >= state.frames - 1) {
    return { ...state, playing, frame: 0 };
  }
  return { ...state, playing };
}

/** One playback tick: advance a frame, stopping at frames-1. */
export function tick(state: ViewState): ViewState {
  if (!state.playing) return state;
  if (state.frame >= state.frames - 1) {
    return { ...state, playing: false };
  }
  return { ...state, frame: state.frame + 1 };
}

/** Pure state -> request body mapping. */
export function requestOf(state: ViewState): RenderParams {
  return {
    frame: state.frame,
    width: state.width,
    height: state.height,
    azimuth: state.azimuth,
    elevation: state.elevation,
    radius: state.radius,
    use_ess: state.useEss,
  };
}

/** GET query string for the same request, fields in a fixed order. */
export function queryOf(state: ViewState): string {
  const p = requestOf(state);
  const q = new URLSearchParams();
  q.set("frame", String(p.frame));
  q.set("width", String(p.width));
  q.set("height", String(p.height));
  q.set("azimuth", String(p.azimuth));
  q.set("elevation", String(p.elevation));
  q.set("radius", String(p.radius));
  q.set("use_ess", p.use_ess ? "true" : "false");
  return q.toString();
}
