import { describe, expect, it } from "vitest";
import {
  diagonalOf,
  initialState,
  orbitUpdate,
  queryOf,
  requestOf,
  scrub,
  setPlaying,
  tick,
  zoom,
} from "../src/state.js";
import { Meta } from "../src/types.js";

const META: Meta = {
  frames: 3,
  bounds: { min: [0, 0, 0], max: [1, 2, 2] },
  default_camera: { azimuth: 0, elevation: 15, radius: 6, fov_deg: 45 },
  model_id: "m0",
  max_resolution: 512,
};

describe("initialState", () => {
  it("exposes the frame range for a 3-frame model as [0, 2]", () => {
    const s = initialState(META);
    expect(s.frames).toBe(3);
    expect(s.frame).toBe(0);
    expect(scrub(s, 999).frame).toBe(2);
  });

  it("starts the camera at 2x the bounds diagonal", () => {
    // diag = sqrt(1 + 4 + 4) = 3
    expect(diagonalOf(META)).toBeCloseTo(3, 12);
    expect(initialState(META).radius).toBeCloseTo(6, 12);
  });

  it("starts paused with ESS on", () => {
    const s = initialState(META);
    expect(s.playing).toBe(false);
    expect(s.useEss).toBe(true);
  });
});

describe("orbitUpdate", () => {
  it("returns the identical state for a zero drag, so no request fires", () => {
    const s = initialState(META);
    expect(orbitUpdate(s, 0, 0)).toBe(s);
  });

  it("clamps elevation short of +90 on a huge upward drag", () => {
    let s = initialState(META);
    s = orbitUpdate(s, 0, -100000);
    expect(s.elevation).toBeLessThan(90);
    expect(s.elevation).toBeGreaterThan(89);
    s = orbitUpdate(s, 0, 100000);
    expect(s.elevation).toBeGreaterThan(-90);
    expect(s.elevation).toBeLessThan(-89);
  });

  it("preserves radius and frame", () => {
    const s = initialState(META);
    const t = orbitUpdate(s, 30, -10);
    expect(t.radius).toBe(s.radius);
    expect(t.frame).toBe(s.frame);
    expect(t.azimuth).not.toBe(s.azimuth);
  });
});

describe("zoom", () => {
  it("keeps radius strictly positive under repeated zoom-in", () => {
    let s = initialState(META);
    for (let i = 0; i < 500; i++) s = zoom(s, 0.5);
    expect(s.radius).toBeGreaterThan(0);
  });
});

describe("scrub", () => {
  it("clamps frame -1 to 0", () => {
    const s = scrub(initialState(META), -1);
    expect(s.frame).toBe(0);
  });

  it("clamps past the end to frames-1", () => {
    expect(scrub(initialState(META), 3).frame).toBe(2);
  });

  it("emits a request whose frame query parameter matches", () => {
    const s = scrub({ ...initialState(META), frame: 0 }, 2);
    const q = new URLSearchParams(queryOf(s));
    expect(q.get("frame")).toBe("2");
  });
});

describe("playback", () => {
  it("tick advances one frame while playing", () => {
    let s = setPlaying(initialState(META), true);
    s = tick(s);
    expect(s.frame).toBe(1);
    expect(s.playing).toBe(true);
  });

  it("stops at the last frame instead of wrapping", () => {
    let s = setPlaying(scrub(initialState(META), 1), true);
    s = tick(s); // -> frame 2, still playing
    expect(s.frame).toBe(2);
    s = tick(s); // at the end: stop, do not advance
    expect(s.frame).toBe(2);
    expect(s.playing).toBe(false);
  });

  it("pressing play on the last frame restarts from 0", () => {
    const s = setPlaying(scrub(initialState(META), 2), true);
    expect(s.frame).toBe(0);
    expect(s.playing).toBe(true);
  });
});

describe("request mapping", () => {
  it("is pure: equal states give identical bodies and query strings", () => {
    const a = orbitUpdate(initialState(META), 17, -4);
    const b = orbitUpdate(initialState(META), 17, -4);
    expect(requestOf(a)).toEqual(requestOf(b));
    expect(queryOf(a)).toBe(queryOf(b));
  });

  it("carries the full pose and quality preset", () => {
    const s = initialState(META);
    const q = new URLSearchParams(queryOf(s));
    expect(q.get("azimuth")).toBe("0");
    expect(q.get("elevation")).toBe("15");
    expect(q.get("radius")).toBe("6");
    expect(q.get("width")).toBe("256");
    expect(q.get("use_ess")).toBe("true");
  });
});
