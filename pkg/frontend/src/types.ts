/** Wire types for the render service (GET /meta, GET|POST /render). */

export interface CameraDefaults {
  azimuth: number;
  elevation: number;
  radius: number;
  fov_deg: number;
}

export interface Meta {
  frames: number;
  bounds: { min: number[]; max: number[] };
  default_camera: CameraDefaults;
  model_id: string;
  max_resolution: number;
}

/** Body of a render request; also flattens 1:1 into GET query parameters. */
export interface RenderParams {
  frame: number;
  width: number;
  height: number;
  azimuth: number;
  elevation: number;
  radius: number;
  use_ess: boolean;
}

export interface RenderResult {
  blob: Blob;
  /** Server-side render time from the X-Render-Millis header. */
  renderMillis: number;
  /** Wall time of the round trip minus the server render time. */
  networkMillis: number;
}
