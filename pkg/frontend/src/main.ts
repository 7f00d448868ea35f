/**
 * DOM wiring for the free-viewpoint player.
 *
 * All view logic is in state.ts; this file only translates browser events
 * into state transitions and pushes the resulting render requests through
 * the latest-wins coalescer.
 */

import { ServiceClient } from "./client.js";
import { LatestWins } from "./coalesce.js";
import { Player } from "./player.js";
import {
  ViewState,
  initialState,
  orbitUpdate,
  queryOf,
  scrub,
  setPlaying,
  tick,
  zoom,
} from "./state.js";
import { RenderResult } from "./types.js";

const DEFAULT_SERVICE = "http://127.0.0.1:8694";

function serviceUrl(): string {
  const q = new URLSearchParams(window.location.search);
  const url = q.get("service") ?? DEFAULT_SERVICE;
  return url.replace(/\/+$/, "");
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

async function boot(): Promise<void> {
  const banner = el<HTMLDivElement>("banner");
  const image = el<HTMLImageElement>("frame");
  const scrubber = el<HTMLInputElement>("scrubber");
  const playBtn = el<HTMLButtonElement>("play");
  const frameLabel = el<HTMLSpanElement>("frame-label");
  const latency = el<HTMLSpanElement>("latency");
  const poseLabel = el<HTMLSpanElement>("pose");

  const client = new ServiceClient(serviceUrl());

  let meta;
  try {
    meta = await client.meta();
  } catch (err) {
    banner.textContent = `service unreachable at ${client.baseUrl}: ${err}`;
    banner.style.display = "block";
    return;
  }

  let state: ViewState = initialState(meta);
  scrubber.min = "0";
  scrubber.max = String(meta.frames - 1);
  scrubber.value = "0";

  let shownUrl: string | null = null;
  const coalescer = new LatestWins<string, RenderResult>(
    (query) => client.render(query),
    (_query, res) => {
      if (shownUrl) URL.revokeObjectURL(shownUrl);
      shownUrl = URL.createObjectURL(res.blob);
      image.src = shownUrl;
      latency.textContent =
        `render ${res.renderMillis.toFixed(1)} ms + ` +
        `network ${res.networkMillis.toFixed(1)} ms`;
      banner.style.display = "none";
    },
    (_query, err) => {
      banner.textContent = `render failed: ${err}`;
      banner.style.display = "block";
    },
  );

  function syncControls(): void {
    scrubber.value = String(state.frame);
    frameLabel.textContent = `${state.frame} / ${state.frames - 1}`;
    playBtn.textContent = state.playing ? "pause" : "play";
    poseLabel.textContent =
      `az ${state.azimuth.toFixed(1)}° el ${state.elevation.toFixed(1)}° ` +
      `r ${state.radius.toFixed(2)}`;
  }

  const player = new Player(250, () => update(tick(state)));

  function update(next: ViewState): void {
    // transition functions return the same object when nothing changed;
    // in that case there is nothing to redraw or request
    if (next === state) return;
    state = next;
    syncControls();
    if (state.playing && !player.running) player.start();
    if (!state.playing && player.running) player.stop();
    coalescer.submit(queryOf(state));
  }

  // drag to orbit
  let dragging = false;
  let lastX = 0;
  let lastY = 0;
  image.addEventListener("pointerdown", (ev) => {
    dragging = true;
    lastX = ev.clientX;
    lastY = ev.clientY;
    image.setPointerCapture(ev.pointerId);
  });
  image.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - lastX;
    const dy = ev.clientY - lastY;
    lastX = ev.clientX;
    lastY = ev.clientY;
    update(orbitUpdate(state, dx, dy));
  });
  image.addEventListener("pointerup", () => {
    dragging = false;
  });

  // wheel to zoom
  image.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    update(zoom(state, ev.deltaY > 0 ? 1.1 : 1 / 1.1));
  });

  scrubber.addEventListener("input", () => {
    update(setPlaying(scrub(state, parseInt(scrubber.value, 10)), false));
  });

  playBtn.addEventListener("click", () => {
    update(setPlaying(state, !state.playing));
  });

  syncControls();
  coalescer.submit(queryOf(state)); // first render: frame 0, default pose
}

boot();
